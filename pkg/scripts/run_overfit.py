"""Train BL and LE-window on a synthetic corpus and report train/test F1.

    python scripts/run_overfit.py --seed 7 --epochs 30
"""
import argparse
import time

from labelemb.cooccurrence import build_cooccurrence
from labelemb.corpus import build_vocab
from labelemb.synth import generate_splits
from labelemb.trainer import TrainConfig, assemble_model, evaluate_f1, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-train", type=int, default=200)
    ap.add_argument("--n-test", type=int, default=50)
    ap.add_argument("--n-labels", type=int, default=8)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--modes", nargs="+", default=["bl", "le-window"])
    args = ap.parse_args()

    train_c, dev, test = generate_splits(args.n_train, args.n_test, args.n_test, args.n_labels,
                                         seed=args.seed)
    vocab = build_vocab(train_c, dev)
    cooc = build_cooccurrence(train_c, vocab)
    for mode in args.modes:
        started = time.perf_counter()
        model = assemble_model(TrainConfig(mode=mode, epochs=args.epochs), vocab, cooc)
        result = train(model, train_c, dev)
        print(f"{mode:<10} best epoch {result.best_epoch:>2}  train F1 {evaluate_f1(model, train_c):.4f}  "
              f"test F1 {evaluate_f1(model, test):.4f}  {time.perf_counter() - started:.0f}s")


if __name__ == "__main__":
    main()
