"""Parameter counts for BL and LE variants at a given corpus shape.

    python scripts/param_counts.py --n 2427 --m 138 --embed-dim 300
"""
import argparse

from labelemb.model import count_parameters
from labelemb.trainer import TrainConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2427, help="word vocabulary incl. UNK and PAD")
    ap.add_argument("--m", type=int, default=138, help="label count")
    ap.add_argument("--embed-dim", type=int, default=300)
    ap.add_argument("--gru-units", type=int, default=60)
    ap.add_argument("--window", type=int, default=5)
    ap.add_argument("--stride", type=int, default=10)
    args = ap.parse_args()
    counts = {}
    for mode in ("bl", "le-plain", "le-window"):
        cfg = TrainConfig(mode=mode, embed_dim=args.embed_dim, gru_units=args.gru_units,
                          window=args.window, pool_stride=args.stride)
        counts[mode] = count_parameters(cfg, args.n, args.m)
    base = counts["bl"]["total"]
    print(f"n={args.n} m={args.m} d={args.embed_dim} h={args.gru_units}")
    for mode, c in counts.items():
        groups = " ".join(f"{k}={v}" for k, v in c.items() if k != "total")
        print(f"{mode:<10} {c['total']:>9}  (+{c['total'] - base:>6}, {100 * (c['total'] - base) / base:5.2f}%)  {groups}")


if __name__ == "__main__":
    main()
