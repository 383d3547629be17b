"""Count seeds whose horizon-1 selection keeps a rainfall feature.

    python3 scripts/planted_signal.py --seeds 10 --out runs/planted
"""
import argparse
from pathlib import Path

from choleracast.config import RunConfig
from choleracast.pipeline import run_pipeline
from choleracast.simulate import simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--out", default="runs/planted")
    args = ap.parse_args()
    hits = 0
    for seed in range(args.seeds):
        d = Path(args.out) / f"seed{seed}"
        simulate(d / "inputs", seed=seed)
        cfg = RunConfig.from_input_dir(d / "inputs", out_dir=str(d / "run"), horizons=(1,), seed=seed)
        final = run_pipeline(cfg, stop_after="forward").selections[1].final
        rain = [f for f in final if f.startswith(("rainfall__w", "nb_rainfall__w"))]
        hits += bool(rain)
        print(f"seed {seed}: {len(final)} selected, rainfall: {', '.join(rain) or '-'}", flush=True)
    print(f"{hits}/{args.seeds} seeds keep a rainfall feature")


if __name__ == "__main__":
    main()
