"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import RunConfig
from .errors import DataError, StageError
from .featurex import extract_features
from .pipeline import (emit_plot_data, format_table, prepare, read_forecasts, run_pipeline)
from .prep import write_frames_csv, write_panel_csv
from .simulate import simulate

log = logging.getLogger("choleracast")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

PIPELINE_COMMANDS = {
    "select": ("forward", "significance, pruning, tuning, ranking and forward selection per horizon"),
    "tune": ("tune", "significance, pruning and TPE tuning per horizon (writes trials.json)"),
    "train": ("train", "selection plus final gbtree and baseline models per horizon"),
    "evaluate": ("evaluate", "train and score both models; writes metrics.json"),
    "forecast": ("forecast", "evaluate and write forecasts.csv"),
    "run": ("plot-data", "full pipeline including per-governorate plot series"),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _horizons(text):
    if text == "all":
        return (1, 2, 3, 4)
    try:
        hs = tuple(int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad horizon list {text!r}")
    if not hs or not set(hs) <= {1, 2, 3, 4}:
        raise argparse.ArgumentTypeError("horizons must be drawn from 1,2,3,4 (or 'all')")
    return hs


def _kv(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected name=value, got {text!r}")
    k, v = text.split("=", 1)
    return k, float(v)


def _add_run_args(p):
    p.add_argument("--config", help="run configuration JSON")
    p.add_argument("--input-dir", help="directory holding the five input files (default names)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--horizons", type=_horizons, help="comma list from 1..4, or 'all'")
    p.add_argument("--schedule", help="fold schedule JSON (default: built-in schedule)")
    p.add_argument("--leakage", choices=("anchor", "label"), help="training-row exclusion rule")
    p.add_argument("--anchor-stride", type=int, help="days between consecutive anchors")
    p.add_argument("--q-cut", type=float)
    p.add_argument("--corr-threshold", type=float)
    p.add_argument("--cap", type=int, help="maximum number of selected features")
    p.add_argument("--min-delta", type=float, help="required CV-RMSE drop to keep a feature")
    p.add_argument("--tune-max-features", type=int)
    p.add_argument("--forward-max-candidates", type=int)
    p.add_argument("--gbt", type=_kv, action="append", default=[], metavar="NAME=VALUE",
                   help="pin a gbtree parameter (excluded from tuning); repeatable")
    p.add_argument("--n-trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--retune-final", action="store_true", default=None)


def build_parser():
    top = _Parser(prog="choleracast", description="Regional cholera incidence forecasting.")
    top.add_argument("-v", "--verbose", action="count", default=0)
    sub = top.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("simulate", help="write a seeded synthetic input set")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--n-governorates", type=int, default=21)
    p.add_argument("--n-days", type=int, default=300)

    p = sub.add_parser("prepare", help="daily frames and the anchor panel (frames.csv, panel.csv)")
    _add_run_args(p)
    p = sub.add_parser("features", help="candidate feature matrix (features.csv)")
    _add_run_args(p)
    for name, (_, text) in PIPELINE_COMMANDS.items():
        _add_run_args(sub.add_parser(name, help=text))

    p = sub.add_parser("plot-data", help="per-governorate plot series from forecasts.csv")
    p.add_argument("--forecasts", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", default="gbtree", choices=("gbtree", "baseline"))
    return top


def config_from_args(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.input_dir:
        cfg.inputs = RunConfig.from_input_dir(args.input_dir).inputs
    overrides = {
        "out_dir": args.out, "horizons": args.horizons, "schedule": args.schedule,
        "leakage": args.leakage, "anchor_stride": args.anchor_stride, "q_cut": args.q_cut,
        "corr_threshold": args.corr_threshold, "cap": args.cap, "min_delta": args.min_delta,
        "tune_max_features": args.tune_max_features, "forward_max_candidates": args.forward_max_candidates,
        "n_trials": args.n_trials, "seed": args.seed, "retune_final": args.retune_final,
    }
    for k, v in overrides.items():
        if v is not None:
            setattr(cfg, k, v)
    if args.gbt:
        cfg.gbt = {**cfg.gbt, **dict(args.gbt)}
    if not cfg.inputs:
        raise UsageError("no inputs: pass --config or --input-dir")
    try:
        cfg.validate()
    except FileNotFoundError:
        raise
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc))
    return cfg


def _run(args) -> int:
    if args.command == "simulate":
        paths = simulate(args.out, args.seed, args.n_governorates, args.n_days)
        for k, p in paths.items():
            print(f"{k}: {p}")
        return EXIT_OK
    if args.command == "plot-data":
        paths = emit_plot_data(read_forecasts(args.forecasts), args.out, args.model)
        print(f"wrote {len(paths)} files to {args.out}")
        return EXIT_OK

    cfg = config_from_args(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.command in ("prepare", "features"):
        cfg.validate()
        prep = prepare(cfg)
        if args.command == "prepare":
            write_frames_csv(out / "frames.csv", prep.frames)
            write_panel_csv(out / "panel.csv", prep.panel)
            print(f"{len(prep.frames)} governorates, {len(prep.panel)} samples -> {out}")
        else:
            fm = extract_features(prep.panel)
            fm.write_csv(out / "features.csv")
            print(f"{fm.n_rows} samples x {len(fm.descriptors)} features -> {out / 'features.csv'}")
        return EXIT_OK

    stop_after = PIPELINE_COMMANDS[args.command][0]
    cfg.save(out / "config.json")
    res = run_pipeline(cfg, stop_after=stop_after)
    if res.metrics is not None:
        print(format_table(res.metrics))
    for h, sel in sorted(res.selections.items()):
        print(f"horizon {h}: {len(sel.report.significant)} significant, {len(sel.report.decorrelated)} "
              f"decorrelated, {len(sel.report.final)} selected")
    return EXIT_OK


def _root_cause(exc):
    while isinstance(exc, StageError):
        exc = exc.cause
    return exc


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:          # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        cause = _root_cause(exc)
        stage = f" in stage '{exc.stage}'" if isinstance(exc, StageError) else ""
        if isinstance(cause, (DataError, FileNotFoundError, json.JSONDecodeError)):
            print(f"data error{stage}: {cause}", file=sys.stderr)
            return EXIT_DATA
        log.debug("internal error", exc_info=True)
        print(f"internal error{stage}: {type(cause).__name__}: {cause}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
