"""How far the normal approximation of the signed-rank test is from exact enumeration.

    python scripts/wilcoxon_normal_gap.py --n 12 --trials 2000
"""
import argparse

import numpy as np

from labelemb.evaluation import wilcoxon_signed_rank


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=12)
    ap.add_argument("--trials", type=int, default=2000)
    ap.add_argument("--shift", type=float, default=0.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    gaps = np.array([
        abs(wilcoxon_signed_rank(a, b, method="normal").p_value
            - wilcoxon_signed_rank(a, b, method="exact").p_value)
        for a, b in ((rng.normal(size=args.n), rng.normal(args.shift, 1, size=args.n))
                     for _ in range(args.trials))
    ])
    print(f"n={args.n} trials={args.trials}: max gap {gaps.max():.4f}, mean {gaps.mean():.4f}, "
          f"share above 0.01 {np.mean(gaps > 0.01):.3f}")


if __name__ == "__main__":
    main()
