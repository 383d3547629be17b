"""End-to-end orchestration: inputs -> features -> per-horizon selection, tuning,
training and evaluation -> metrics, forecasts and plot series.

Selection and tuning only ever see the rows that the holdout model trains on
(anchors before the holdout start, label-safe under ``leakage="label"``).
"""
from __future__ import annotations

import contextlib
import csv
import datetime as dt
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import gbtree
from .baseline import LinearModel, fit_ols
from .config import RunConfig
from .cv import FoldSchedule, default_schedule, evaluate, fold_splits, holdout_split
from .errors import CholeraCastError, StageError
from .featurex import FeatureMatrix, extract_features
from .gbtree import GbtParams
from .ingest import load_inputs
from .prep import MAX_WINDOW, assemble_panel, build_frames
from .seeding import label_seed
from .select import (FoldCache, SelectionReport, correlation_prune, forward_select, importance_rank,
                     significance_filter)
from .tpe import TpeSettings, TrialHistory, optimize

log = logging.getLogger(__name__)

MODELS = ("gbtree", "baseline")
SPLITS = ("train", "cv", "holdout", "future")
STAGES = ("prepare", "features", "significance", "prune", "tune", "rank", "forward",
          "train", "evaluate", "forecast", "plot-data")


@contextlib.contextmanager
def stage(name):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


# ---------------------------------------------------------------- preparation


@dataclass
class Prepared:
    frames: dict
    schedule: FoldSchedule
    panel: object
    last_date: dt.date


def anchor_calendar(first: dt.date, last: dt.date, stride: int, origin: dt.date) -> list[dt.date]:
    """Every ``stride``-th day from ``origin`` within [first, last], plus ``last`` itself."""
    start = origin if origin >= first else origin + dt.timedelta(
        days=stride * math.ceil((first - origin).days / stride))
    days = []
    d = start
    while d <= last:
        days.append(d)
        d += dt.timedelta(days=stride)
    if not days or days[-1] != last:
        days.append(last)
    return days


def prepare(cfg: RunConfig) -> Prepared:
    bundle = load_inputs(**{k: cfg.inputs[k] for k in ("cholera", "rainfall", "conflict",
                                                      "gridmap", "governorates")})
    frames = build_frames(bundle)
    fr0 = next(iter(frames.values()))
    first, last = fr0.start, fr0.end
    sched = FoldSchedule.load(cfg.schedule) if cfg.schedule else default_schedule()
    sched = sched.with_data_end(last)
    earliest = first + dt.timedelta(days=MAX_WINDOW - 1)
    if sched.base_start < earliest:
        log.warning("base training starts %s but the first anchor with %d days of history is %s",
                    sched.base_start, MAX_WINDOW, earliest)
    anchors = anchor_calendar(max(earliest, sched.base_start), last, cfg.anchor_stride, sched.base_start)
    panel = assemble_panel(frames, anchors=anchors, require_horizons=())
    return Prepared(frames, sched, panel, last)


# ---------------------------------------------------------------- selection and tuning


@dataclass
class HorizonSelection:
    horizon: int
    report: SelectionReport
    params: GbtParams
    history: TrialHistory
    final_history: TrialHistory = None

    @property
    def final(self) -> list:
        return self.report.final


def selection_rows(fm: FeatureMatrix, horizon: int, schedule: FoldSchedule, leakage: str):
    """Row sets visible to selection and tuning.

    ``fit`` is the holdout model's training set (used for the rank tests,
    pruning and importance); ``cv`` is every labelled anchor in
    [base start, holdout start), over which the schedule's folds are cut.
    No holdout anchor is in either.
    """
    y = fm.targets[:, horizon - 1]
    fit, _ = holdout_split(fm.anchor, y, schedule, horizon, leakage)
    cv = np.flatnonzero((fm.anchor >= np.datetime64(schedule.base_start, "D"))
                        & (fm.anchor < np.datetime64(schedule.holdout_start, "D")) & np.isfinite(y))
    assert np.isin(fit, cv).all()
    return fit, cv


def _params(tuned: dict, cfg: RunConfig, horizon: int) -> GbtParams:
    d = {**tuned, **cfg.gbt}
    d.setdefault("seed", label_seed(cfg.seed, f"gbt/h{horizon}") % (1 << 32))
    return GbtParams.from_dict(d)


def tune(cache: FoldCache, n_cols: int, cfg: RunConfig, horizon: int, label: str = "tpe"):
    """TPE over the config's search space; loss is the mean fold MSE."""
    space = cfg.search_space()
    cols = np.arange(n_cols)
    if cfg.n_trials == 0 or not space:
        return _params({}, cfg, horizon), TrialHistory()

    def objective(p):
        return float(np.mean(cache.fold_mses(cols, _params(p, cfg, horizon))))

    best, hist = optimize(objective, space, cfg.n_trials, label_seed(cfg.seed, f"{label}/h{horizon}"),
                          TpeSettings(**cfg.tpe))
    return _params(best, cfg, horizon), hist


def select_horizon(fm: FeatureMatrix, horizon: int, cfg: RunConfig, schedule: FoldSchedule,
                   stop_after: str = "forward") -> HorizonSelection:
    rows, cv_rows = selection_rows(fm, horizon, schedule, cfg.leakage)
    X, y = fm.values[rows], fm.targets[rows, horizon - 1]
    Xc, yc = fm.values[cv_rows], fm.targets[cv_rows, horizon - 1]
    ids = fm.ids
    rep = SelectionReport(horizon=horizon, n_candidates=len(ids), n_rows=int(len(rows)))

    with stage("significance"):
        sig, results = significance_filter(X, y, ids, cfg.q_cut)
        rep.tests = [r.to_dict() for r in results]
        rep.significant = sig
        if not sig:
            raise CholeraCastError(f"horizon {horizon}: no feature passed q <= {cfg.q_cut}")
    pos = {d: j for j, d in enumerate(ids)}
    with stage("prune"):
        rep.decorrelated, rep.dropped_pairs = correlation_prune(X[:, [pos[d] for d in sig]], sig,
                                                                cfg.corr_threshold)
    splits = fold_splits(fm.anchor[cv_rows], yc, schedule, horizon, cfg.leakage)
    with stage("tune"):
        tune_ids = rep.decorrelated[:cfg.tune_max_features]
        cache = FoldCache(Xc[:, [pos[d] for d in tune_ids]], yc, splits)
        params, hist = tune(cache, len(tune_ids), cfg, horizon)
        rep.params = asdict(params)
    sel = HorizonSelection(horizon, rep, params, hist)
    if stop_after == "tune":
        return sel
    with stage("rank"):
        rep.ranked, rep.importance = importance_rank(X[:, [pos[d] for d in rep.decorrelated]], y,
                                                     rep.decorrelated, params)
    with stage("forward"):
        pool = rep.ranked[:cfg.forward_max_candidates]
        fcache = FoldCache(Xc[:, [pos[d] for d in pool]], yc, splits)
        kept, rep.trajectory = forward_select(fcache, range(len(pool)), params, cfg.min_delta, cfg.cap,
                                              ids=pool)
        rep.final = [pool[c] for c in kept]
    if cfg.retune_final:
        with stage("tune"):
            fin = FoldCache(Xc[:, [pos[d] for d in rep.final]], yc, splits)
            sel.params, sel.final_history = tune(fin, len(rep.final), cfg, horizon, label="tpe-final")
            rep.params = asdict(sel.params)
    rep.check_nested()
    return sel


# ---------------------------------------------------------------- training, evaluation, forecasts


@dataclass
class HorizonResult:
    selection: HorizonSelection
    metrics: dict                       # model -> Metrics
    models: dict                        # model -> fitted model
    records: list = field(default_factory=list)


def model_specs(params: GbtParams) -> dict:
    return {"gbtree": lambda X, y: gbtree.fit(X, y, params), "baseline": fit_ols}


def split_labels(fm: FeatureMatrix, horizon: int, ev, schedule: FoldSchedule) -> np.ndarray:
    y = fm.targets[:, horizon - 1]
    lab = np.full(fm.n_rows, "train", dtype=object)
    lab[ev.cv_fold >= 0] = "cv"
    lab[ev.holdout_rows] = "holdout"
    lab[~np.isfinite(y)] = "future"
    return lab


def forecast_records(fm: FeatureMatrix, horizon: int, model: str, ev, labels, final_pred) -> list[dict]:
    """cv rows carry out-of-fold predictions; all other rows the final model's."""
    y = fm.targets[:, horizon - 1]
    pred = np.array(final_pred, dtype=np.float64)
    cv = labels == "cv"
    pred[cv] = ev.cv_pred[cv]
    pred[ev.holdout_rows] = ev.holdout_pred
    out = []
    for r in range(fm.n_rows):
        out.append({"governorate": str(fm.governorate[r]), "anchor": str(fm.anchor[r]), "horizon": horizon,
                    "model": model, "split": str(labels[r]),
                    "y_true": float(y[r]) if np.isfinite(y[r]) else None, "y_pred": float(pred[r])})
    return out


def train_evaluate(fm: FeatureMatrix, sel: HorizonSelection, cfg: RunConfig,
                   schedule: FoldSchedule) -> HorizonResult:
    h = sel.horizon
    cols = [fm.ids.index(d) for d in sel.final]
    X, y = fm.values[:, cols], fm.targets[:, h - 1]
    metrics, models, records = {}, {}, []
    for name, spec in model_specs(sel.params).items():
        with stage("evaluate"):
            ev = evaluate(spec, X, y, fm.anchor, schedule, h, cfg.leakage, fm.governorate, name)
            final_pred = ev.final_model.predict(X)
        metrics[name] = ev.metrics
        models[name] = ev.final_model
        with stage("forecast"):
            labels = split_labels(fm, h, ev, schedule)
            records += forecast_records(fm, h, name, ev, labels, final_pred)
    return HorizonResult(sel, metrics, models, records)


# ---------------------------------------------------------------- artifacts


FORECAST_COLUMNS = ("horizon", "model", "governorate", "anchor", "split", "y_true", "y_pred")


def _num(v):
    return "" if v is None else repr(float(v))


def write_forecasts(path, records):
    recs = sorted(records, key=lambda r: (r["horizon"], MODELS.index(r["model"]), r["governorate"], r["anchor"]))
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FORECAST_COLUMNS)
        for r in recs:
            w.writerow([r["horizon"], r["model"], r["governorate"], r["anchor"], r["split"],
                        _num(r["y_true"]), _num(r["y_pred"])])


def read_forecasts(path) -> list[dict]:
    out = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            out.append({"horizon": int(row["horizon"]), "model": row["model"],
                        "governorate": row["governorate"], "anchor": row["anchor"], "split": row["split"],
                        "y_true": float(row["y_true"]) if row["y_true"] else None,
                        "y_pred": float(row["y_pred"])})
    return out


def emit_plot_data(records, out_dir, model: str = "gbtree") -> list[Path]:
    """One CSV per (governorate, horizon): date, y_true, y_pred, split."""
    recs = [r for r in records if r["model"] == model]
    if not recs:
        raise ValueError(f"no forecast records for model {model!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    groups = {}
    for r in recs:
        groups.setdefault((r["governorate"], r["horizon"]), []).append(r)
    paths = []
    for (g, h), rows in sorted(groups.items()):
        p = out / f"{g}_h{h}.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("date", "y_true", "y_pred", "split"))
            for r in sorted(rows, key=lambda r: r["anchor"]):
                w.writerow([r["anchor"], _num(r["y_true"]), _num(r["y_pred"]), r["split"]])
        paths.append(p)
    return paths


def cumulative_curve(values, start: float = 0.0) -> np.ndarray:
    """Undo differencing: running total of per-period values from ``start``."""
    return start + np.cumsum(np.asarray(values, dtype=np.float64))


def metrics_document(results: dict) -> dict:
    rows = [results[h].metrics[m].to_dict() for h in sorted(results) for m in MODELS]
    table = {str(h): {m: {"cv_rmse": results[h].metrics[m].cv_rmse,
                          "holdout_rmse": results[h].metrics[m].holdout_rmse} for m in MODELS}
             for h in sorted(results)}
    return {"metrics": rows, "table": table}


def format_table(doc: dict) -> str:
    lines = ["horizon  weeks  gbtree_cv  gbtree_holdout  baseline_cv  baseline_holdout"]
    for h, row in sorted(doc["table"].items(), key=lambda kv: int(kv[0])):
        k = int(h)
        g, b = row["gbtree"], row["baseline"]
        lines.append(f"{k:>7}  {2 * (k - 1)}-{2 * k:<3}  {g['cv_rmse']:>9.4f}  {g['holdout_rmse']:>14.4f}"
                     f"  {b['cv_rmse']:>11.4f}  {b['holdout_rmse']:>16.4f}")
    return "\n".join(lines)


def _dump(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def write_selection(out: Path, sel: HorizonSelection):
    d = out / f"h{sel.horizon}"
    d.mkdir(parents=True, exist_ok=True)
    (d / "selection_report.json").write_text(sel.report.to_json() + "\n")
    (d / "trials.json").write_text(sel.history.to_json() + "\n")
    if sel.final_history is not None:
        (d / "trials_final.json").write_text(sel.final_history.to_json() + "\n")
    if sel.report.final:
        (d / "features.txt").write_text("\n".join(sel.report.final) + "\n")


def write_models(out: Path, res: HorizonResult):
    d = out / f"h{res.selection.horizon}"
    d.mkdir(parents=True, exist_ok=True)
    res.models["gbtree"].save(d / "gbtree.json")
    lin: LinearModel = res.models["baseline"]
    _dump(d / "baseline.json", {"features": res.selection.final, **lin.to_dict()})


@dataclass
class RunResult:
    prepared: Prepared = None
    features: FeatureMatrix = None
    selections: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    metrics: dict = None
    out_dir: Path = None


def run_pipeline(cfg: RunConfig, stop_after: str = "plot-data", feature_hook=None) -> RunResult:
    """Run every stage up to and including ``stop_after``, writing artifacts as it goes.

    ``feature_hook(fm) -> fm`` lets tests alter the feature matrix before selection.
    """
    if stop_after not in STAGES:
        raise ValueError(f"stop_after must be one of {STAGES}")
    upto = STAGES.index(stop_after)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = RunResult(out_dir=out)
    with stage("prepare"):
        cfg.validate()
        res.prepared = prep = prepare(cfg)
        _dump(out / "schedule.json", prep.schedule.to_dict())
    if upto < STAGES.index("features"):
        return res
    with stage("features"):
        fm = extract_features(prep.panel)
        if feature_hook is not None:
            fm = feature_hook(fm)
        res.features = fm
    if upto < STAGES.index("significance"):
        return res
    sel_stop = "tune" if stop_after == "tune" else "forward"
    for h in cfg.horizons:
        log.info("horizon %d: selection", h)
        sel = select_horizon(fm, h, cfg, prep.schedule, stop_after=sel_stop)
        res.selections[h] = sel
        write_selection(out, sel)
        if upto < STAGES.index("train"):
            continue
        log.info("horizon %d: %d features, training and evaluation", h, len(sel.final))
        r = train_evaluate(fm, sel, cfg, prep.schedule)
        res.results[h] = r
        write_models(out, r)
    if upto < STAGES.index("evaluate"):
        return res
    res.metrics = metrics_document(res.results)
    _dump(out / "metrics.json", res.metrics)
    if upto < STAGES.index("forecast"):
        return res
    records = [rec for h in sorted(res.results) for rec in res.results[h].records]
    with stage("forecast"):
        write_forecasts(out / "forecasts.csv", records)
    if upto >= STAGES.index("plot-data") and cfg.plot_data:
        with stage("plot-data"):
            emit_plot_data(records, out / "plot_data")
    return res
