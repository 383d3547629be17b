"""Simulate the default synthetic dataset and run the full pipeline on it.

    python3 scripts/run_synthetic.py --out runs/seed42 --seed 42
"""
import argparse
import logging
import time
from pathlib import Path

from choleracast.config import RunConfig
from choleracast.pipeline import format_table, run_pipeline
from choleracast.simulate import simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="runs/synthetic")
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--n-governorates", type=int, default=21)
    ap.add_argument("--n-days", type=int, default=300)
    ap.add_argument("--n-trials", type=int, default=25)
    ap.add_argument("--horizons", default="1,2,3,4")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    out = Path(args.out)
    simulate(out / "inputs", args.seed, args.n_governorates, args.n_days)
    cfg = RunConfig.from_input_dir(out / "inputs", out_dir=str(out / "run"), n_trials=args.n_trials,
                                   horizons=tuple(int(h) for h in args.horizons.split(",")))
    t0 = time.perf_counter()
    res = run_pipeline(cfg)
    print(format_table(res.metrics))
    for h, sel in sorted(res.selections.items()):
        print(f"h{h}: {len(sel.final)} features: {', '.join(sel.final[:8])}{' ...' if len(sel.final) > 8 else ''}")
    print(f"runtime {time.perf_counter() - t0:.0f}s; artifacts in {out / 'run'}")


if __name__ == "__main__":
    main()
