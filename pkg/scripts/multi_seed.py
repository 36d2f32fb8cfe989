"""Mean (stdev) test F1 over several seeds for each mode, on CoNLL files.

    python scripts/multi_seed.py --data data/atis --seeds 1 2 3
"""
import argparse
import statistics
from pathlib import Path

from labelemb.cooccurrence import build_cooccurrence
from labelemb.corpus import build_vocab, load_conll
from labelemb.trainer import TrainConfig, assemble_model, evaluate_f1, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data", required=True, help="directory with train/dev/test.conll")
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--modes", nargs="+", default=["bl", "le-plain", "le-window"])
    ap.add_argument("--config", help="flat key=value config file")
    args = ap.parse_args()
    root = Path(args.data)
    train_c, dev, test = (load_conll(root / f"{s}.conll") for s in ("train", "dev", "test"))
    vocab = build_vocab(train_c, dev)
    cooc = build_cooccurrence(train_c, vocab)
    for mode in args.modes:
        scores = []
        for seed in args.seeds:
            cfg = (TrainConfig.load(args.config, mode=mode, seed=seed) if args.config
                   else TrainConfig(mode=mode, seed=seed))
            model = assemble_model(cfg, vocab, cooc)
            train(model, train_c, dev)
            scores.append(100 * evaluate_f1(model, test))
        spread = statistics.stdev(scores) if len(scores) > 1 else 0.0
        print(f"{mode:<10} {statistics.mean(scores):.2f} ({spread:.2f})  runs: "
              + " ".join(f"{s:.2f}" for s in scores))


if __name__ == "__main__":
    main()
