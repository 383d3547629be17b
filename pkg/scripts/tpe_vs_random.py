"""Paired comparison of TPE and random search on the 3-dim quadratic benchmark.

    python3 scripts/tpe_vs_random.py --trials 60 --seeds 20
"""
import argparse

import numpy as np

from choleracast.tpe import TpeSettings, compare_with_random, quadratic, quadratic_space


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--trials", type=int, default=60)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--split-rule", choices=("sqrt", "quantile"), default="sqrt")
    args = ap.parse_args()
    t, r = compare_with_random(quadratic, quadratic_space(), args.trials, range(args.seeds),
                               TpeSettings(split_rule=args.split_rule))
    print(f"{'seed':>4} {'tpe':>10} {'random':>10}")
    for s, a, b in zip(range(args.seeds), t, r):
        print(f"{s:>4} {a:>10.4f} {b:>10.4f}")
    print(f"median best loss: TPE {np.median(t):.4f}, random {np.median(r):.4f}; "
          f"TPE better on {(t < r).sum()}/{args.seeds} seeds")


if __name__ == "__main__":
    main()
