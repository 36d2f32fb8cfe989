"""Command-line entry point: ``labelemb <command> ...``.

Commands: train, eval, predict, reduce, synth, gradcheck, analyze.
Outputs go to ``--out-dir`` or ``$LABELEMB_OUT_DIR`` (default ``runs``).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import statistics
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cooccurrence import build_cooccurrence
from .corpus import (CorpusFormatError, build_vocab, load_conll, reduce_splits,
                     report_bio_violations, save_conll, validate_bio)
from .evaluation import (DEFAULT_STOPWORDS, accumulate_fc_profiles, compare_fc_profiles,
                         compare_systems, error_breakdown, format_comparison, load_stopwords)
from .gradcheck import run_gradcheck
from .label_space import load_pretrained
from .model import count_parameters
from .synth import generate_splits
from .trainer import TrainConfig, assemble_model, load_model, save_model, train

log = logging.getLogger("labelemb")

OUT_DIR_ENV = "LABELEMB_OUT_DIR"


def out_dir(args) -> Path:
    path = Path(args.out_dir or os.environ.get(OUT_DIR_ENV, "runs"))
    path.mkdir(parents=True, exist_ok=True)
    return path


def digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def resolve_config(args, **extra) -> TrainConfig:
    overrides = dict(
        mode=getattr(args, "mode", None), window=getattr(args, "window", None),
        pool_stride=getattr(args, "stride", None), embed_dim=getattr(args, "embed_dim", None),
        epochs=getattr(args, "epochs", None), **extra,
    )
    if getattr(args, "config", None):
        return TrainConfig.load(args.config, **overrides)
    return TrainConfig(**{k: v for k, v in overrides.items() if v is not None})


def cmd_train(args) -> int:
    train_corpus = load_conll(args.train)
    dev = load_conll(args.dev)
    test = load_conll(args.test) if args.test else None
    for name, corpus in (("train", train_corpus), ("dev", dev)):
        report_bio_violations(corpus, name)
    vocab = build_vocab(train_corpus, dev)
    cooc = build_cooccurrence(train_corpus, vocab)
    root = out_dir(args)
    seeds = args.seed or [1]
    summary = []
    for seed in seeds:
        cfg = resolve_config(args, seed=seed)
        embeddings = None
        if args.pretrained_embeddings:
            embeddings, found = load_pretrained(args.pretrained_embeddings, vocab, cfg.embed_dim,
                                                np.random.default_rng(seed), cfg.embed_init_std)
            log.info("pretrained vectors found for %d of %d words", found, vocab.n)
        model = assemble_model(cfg, vocab, cooc, embeddings)
        run_dir = root / f"{cfg.mode}-seed{seed}" if len(seeds) > 1 else root
        run_dir.mkdir(parents=True, exist_ok=True)
        records = []

        def on_epoch(rec):
            records.append(rec.record())
            print(f"[seed {seed}] epoch {rec.epoch:>2} loss {rec.train_loss:.4f} "
                  f"dev F1 {rec.dev_f1:.4f} lr {rec.lr:.6f}", flush=True)

        result = train(model, train_corpus, dev, cfg, on_epoch=on_epoch)
        save_model(model, run_dir / "checkpoint")
        write_jsonl(run_dir / "train_log.jsonl", records)
        entry = {"seed": seed, "best_epoch": result.best_epoch, "dev_f1": result.best_dev_f1}
        if test is not None:
            entry["test_f1"] = error_breakdown(test, model.predict(test)).f1
        bl_counts = count_parameters(TrainConfig(**{**vars(cfg), "mode": "bl"}), vocab.n, vocab.m)
        manifest = {
            "version": __version__,
            "config": vars(cfg),
            "seed": seed,
            "data": {k: {"path": str(p), "sha256": digest(p)}
                     for k, p in (("train", args.train), ("dev", args.dev), ("test", args.test)) if p},
            "vocab": {"words": vocab.n, "labels": vocab.m},
            "parameters": count_parameters(cfg, vocab.n, vocab.m),
            "parameters_bl": bl_counts["total"],
            "parameter_breakdown": model.parameter_breakdown(),
            "epochs": records,
            "result": entry,
        }
        (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
        summary.append(entry)
    key = "test_f1" if test is not None else "dev_f1"
    scores = [100 * e[key] for e in summary]
    spread = statistics.stdev(scores) if len(scores) > 1 else 0.0
    print(f"{key}: {statistics.mean(scores):.2f} ({spread:.2f}) over {len(scores)} run(s)")
    (root / "summary.json").write_text(json.dumps(
        {"runs": summary, "metric": key, "mean": statistics.mean(scores), "stdev": spread},
        indent=2))
    return 0


def _stopwords(args):
    return load_stopwords(args.stopwords) if args.stopwords else DEFAULT_STOPWORDS


def cmd_eval(args) -> int:
    test = load_conll(args.test)
    model = load_model(args.checkpoint)
    preds = model.predict(test)
    root = out_dir(args)
    stop = _stopwords(args)
    save_conll(test, root / "predictions.conll", preds)
    reports = {strip: error_breakdown(test, preds, strip, stop) for strip in (False, True)}
    rep = reports[False]
    lines = [
        f"precision {rep.precision:.4f}  recall {rep.recall:.4f}  F1 {rep.f1:.4f}",
        f"utterances {rep.n_utterances}  words {rep.n_words}",
        f"words with errors      {rep.words_with_errors:>6} (BIO)  {rep.words_with_errors_nobio:>6} (no BIO)",
        f"utterances with errors {rep.utterances_with_errors:>6} (BIO)  {rep.utterances_with_errors_nobio:>6} (no BIO)",
        "top mislabelled non-stop words: "
        + ", ".join(f"{w} {c}" for w, c in rep.top_words(args.top_k)),
    ]
    records = [{"kind": "scores", **rep.record()}]
    records += [{"kind": "word_errors", "word": w, "errors": c, "strip_bio": s}
                for s, r in reports.items() for w, c in r.top_words(args.top_k)]
    if args.compare:
        other = load_model(args.compare)
        if other.vocab.labels != model.vocab.labels:
            raise ValueError("checkpoints use different label vocabularies")
        other_preds = other.predict(test)
        save_conll(test, root / "predictions_compare.conll", other_preds)
        cmp_bio = compare_systems(test, preds, other_preds, False, stop)
        cmp_nobio = compare_systems(test, preds, other_preds, True, stop)
        lines += ["", format_comparison(cmp_bio, cmp_nobio, (args.name_a, args.name_b)), "",
                  f"{'word':<20}{args.name_a:>8}{args.name_b:>8}"]
        lines += [f"{w:<20}{a:>8}{b:>8}" for w, a, b in cmp_bio.word_table(args.top_k)]
        for strip, c in ((False, cmp_bio), (True, cmp_nobio)):
            records.append({"kind": "comparison", "strip_bio": strip, "shared": len(c.shared),
                            "unique_a": len(c.unique_a), "unique_b": len(c.unique_b),
                            "total_a": c.total_a, "total_b": c.total_b})
    text = "\n".join(lines)
    print(text)
    (root / "report.txt").write_text(text + "\n")
    write_jsonl(root / "report.jsonl", records)
    return 0


def cmd_predict(args) -> int:
    corpus = load_conll(args.test, require_labels=False)
    model = load_model(args.checkpoint)
    path = Path(args.output) if args.output else out_dir(args) / "predictions.conll"
    save_conll(corpus, path, model.predict(corpus))
    print(path)
    return 0


def cmd_reduce(args) -> int:
    train_corpus, dev = load_conll(args.train), load_conll(args.dev)
    vocab = build_vocab(train_corpus, dev)
    root = out_dir(args)
    for cap in args.m_cap:
        red_train, red_dev = reduce_splits(train_corpus, dev, vocab, cap)
        save_conll(red_train, root / f"train.m{cap}.conll")
        save_conll(red_dev, root / f"dev.m{cap}.conll")
        print(f"m={cap}: {len(red_train)}/{len(red_dev)} utterances in train/dev")
    return 0


def cmd_synth(args) -> int:
    train_c, dev, test = generate_splits(args.n_utterances, args.n_dev, args.n_test,
                                         args.n_labels, args.n_templates, args.seed)
    root = out_dir(args)
    for name, corpus in (("train", train_c), ("dev", dev), ("test", test)):
        save_conll(corpus, root / f"{name}.conll")
        bad = sum(len(validate_bio(u.labels)) for u in corpus)
        print(f"{name}: {len(corpus)} utterances, BIO violations {bad}")
    return 0


def cmd_gradcheck(args) -> int:
    if args.corrupt and not any(args.corrupt in model_tensors(m) for m in args.modes):
        raise KeyError(f"no trainable tensor named {args.corrupt!r}")
    ok = True
    for mode in args.modes:
        report, model = run_gradcheck(mode, embed_dim=args.embed_dim or 8, gru_units=args.hidden,
                                      window=args.window or 5, pool_stride=args.stride or 10,
                                      n_words=args.n_words, n_labels=args.n_labels,
                                      length=args.length, seed=args.seed_value,
                                      corrupt=args.corrupt if args.corrupt in
                                      model_tensors(mode) else None)
        print(f"== {mode}: n={model.vocab.n} m={model.vocab.m} d={model.params['embed'].shape[1]} "
              f"h={model.hidden} k={args.length}")
        print("\n".join(report.lines()))
        if not report.passed:
            ok = False
            print(f"FAILED tensors: {', '.join(report.failed)}")
    print("gradcheck", "passed" if ok else "failed")
    return 0 if ok else 1


def model_tensors(mode) -> set[str]:
    names = {"embed", "fc.W", "fc.b", "crf.trans", "crf.start", "crf.end"}
    names |= {f"gru.{d}.{p}" for d in ("fwd", "bwd") for p in "WUb"}
    if mode != "bl":
        names |= {"le.w1", "le.w2"}
    if mode == "le-window":
        names.add("le.window")
    return names


def cmd_analyze(args) -> int:
    test = load_conll(args.test)
    model_a, model_b = load_model(args.checkpoint), load_model(args.compare)
    if model_a.vocab.words != model_b.vocab.words:
        raise ValueError("checkpoints use different word vocabularies")
    prof_a, present = accumulate_fc_profiles(model_a, test)
    prof_b, _ = accumulate_fc_profiles(model_b, test)
    results, significant = compare_fc_profiles(prof_a, prof_b, present, args.alpha)
    root = out_dir(args)
    np.save(root / "profiles_a.npy", prof_a)
    np.save(root / "profiles_b.npy", prof_b)
    write_jsonl(root / "wilcoxon.jsonl", (
        {"word": model_a.vocab.words[i], "statistic": r.statistic, "p_value": r.p_value,
         "n": r.n_effective, "method": r.method, "degenerate": r.degenerate}
        for i, r in results.items()))
    share = len(significant) / max(len(results), 1)
    print(f"profile matrix {prof_a.shape[0]}x{prof_a.shape[1]}; {len(results)} words in test; "
          f"{len(significant)} ({100 * share:.1f}%) with p <= {args.alpha}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="labelemb", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out-dir", help=f"output directory (default ${OUT_DIR_ENV} or ./runs)")

    def model_flags(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--mode", choices=["bl", "le-plain", "le-window"])
        p.add_argument("--window", type=int, help="context window width 2q+1")
        p.add_argument("--stride", type=int, help="max-pooling stride along labels")
        p.add_argument("--embed-dim", type=int)

    p = sub.add_parser("train", help="train a tagger")
    model_flags(p)
    common(p)
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--test")
    p.add_argument("--seed", type=int, action="append",
                   help="repeat for several independent runs")
    p.add_argument("--epochs", type=int)
    p.add_argument("--pretrained-embeddings")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on labeled data")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--compare", help="second checkpoint for a two-system comparison")
    p.add_argument("--name-a", default="BL")
    p.add_argument("--name-b", default="LE")
    p.add_argument("--stopwords")
    p.add_argument("--top-k", type=int, default=5)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="tag a (possibly unlabeled) file")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("reduce", help="vocabulary-covering dataset reduction")
    common(p)
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--m-cap", type=int, action="append", required=True)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("synth", help="generate a synthetic slot-filling corpus")
    common(p)
    p.add_argument("--n-templates", type=int, default=20)
    p.add_argument("--n-utterances", type=int, default=200, help="training utterances")
    p.add_argument("--n-dev", type=int, default=50)
    p.add_argument("--n-test", type=int, default=50)
    p.add_argument("--n-labels", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--modes", nargs="+", default=["bl", "le-window"],
                   choices=["bl", "le-plain", "le-window"])
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--hidden", type=int, default=4)
    p.add_argument("--window", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--n-words", type=int, default=10, help="content words (UNK and PAD are added)")
    p.add_argument("--n-labels", type=int, default=5)
    p.add_argument("--length", type=int, default=7)
    p.add_argument("--seed", dest="seed_value", type=int, default=0)
    p.add_argument("--corrupt", help="negative control: perturb this tensor's gradient")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("analyze", help="FC-output profiles and paired Wilcoxon tests")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--compare", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CorpusFormatError, ValueError, KeyError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
