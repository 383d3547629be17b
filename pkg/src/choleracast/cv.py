"""Rolling-window fold schedule, leakage-safe sample splits, and RMSE metrics.

Every fold trains on anchors from the start of the base window up to (not
including) the fold's first validation day; the training set grows fold by
fold while the validation window slides forward. The holdout range follows
the last fold and is scored once by a model trained on everything before it.

Leakage modes:
  anchor  training anchors strictly precede the evaluation start.
  label   additionally, a training anchor's label window must end before the
          evaluation start (t + 14*horizon < start).
"""
from __future__ import annotations

import datetime as dt
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyFold, EmptyInput
from .prep import HORIZON_DAYS, HORIZONS

log = logging.getLogger(__name__)

LEAKAGE_MODES = ("anchor", "label")

D = dt.date


@dataclass(frozen=True)
class FoldSchedule:
    base_start: dt.date
    base_end: dt.date
    folds: tuple                 # ((val_start, val_end), ...) inclusive
    holdout_start: dt.date
    holdout_end: dict = field(default_factory=dict)   # horizon -> last holdout anchor

    def __post_init__(self):
        if not self.base_start <= self.base_end:
            raise ValueError("base training window is empty")
        prev_end = None
        for s, e in self.folds:
            if s > e:
                raise ValueError(f"fold ({s}, {e}) is reversed")
            if s <= self.base_start:
                raise ValueError("every fold must start after the base training start")
            if prev_end is not None and s < prev_end:
                raise ValueError("folds must be chronological and overlap at most on a boundary day")
            prev_end = e
        if self.folds and self.holdout_start <= self.folds[-1][1]:
            raise ValueError("holdout must start after the last fold")
        for h, end in self.holdout_end.items():
            if end < self.holdout_start:
                log.warning("horizon %s holdout ends (%s) before it starts (%s)", h, end, self.holdout_start)

    def with_data_end(self, last_data_date: dt.date) -> "FoldSchedule":
        """Per-horizon holdout cutoff: last data date minus 14 days per horizon step."""
        ends = {k: last_data_date - dt.timedelta(days=HORIZON_DAYS * k) for k in HORIZONS}
        return FoldSchedule(self.base_start, self.base_end, self.folds, self.holdout_start, ends)

    def to_dict(self) -> dict:
        return {
            "base_train": [self.base_start.isoformat(), self.base_end.isoformat()],
            "folds": [[s.isoformat(), e.isoformat()] for s, e in self.folds],
            "holdout_start": self.holdout_start.isoformat(),
            "holdout_end": {str(k): v.isoformat() for k, v in sorted(self.holdout_end.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FoldSchedule":
        p = D.fromisoformat
        return cls(p(d["base_train"][0]), p(d["base_train"][1]),
                   tuple((p(s), p(e)) for s, e in d["folds"]), p(d["holdout_start"]),
                   {int(k): p(v) for k, v in d.get("holdout_end", {}).items()})

    @classmethod
    def load(cls, path) -> "FoldSchedule":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def default_schedule(last_data_date: dt.date = None) -> FoldSchedule:
    """Base window 2017-07-01..08-15, five half-month folds, holdout from 2017-11-11."""
    sched = FoldSchedule(
        base_start=D(2017, 7, 1),
        base_end=D(2017, 8, 15),
        folds=((D(2017, 8, 16), D(2017, 8, 31)),
               (D(2017, 8, 31), D(2017, 9, 15)),
               (D(2017, 9, 15), D(2017, 9, 30)),
               (D(2017, 9, 30), D(2017, 10, 15)),
               (D(2017, 10, 15), D(2017, 10, 30))),
        holdout_start=D(2017, 11, 11),
    )
    return sched if last_data_date is None else sched.with_data_end(last_data_date)


def _d64(day):
    return np.datetime64(day, "D")


def _train_mask(anchors, start, eval_start, horizon, leakage):
    if leakage not in LEAKAGE_MODES:
        raise ValueError(f"leakage must be one of {LEAKAGE_MODES}, got {leakage!r}")
    m = (anchors >= _d64(start)) & (anchors < _d64(eval_start))
    if leakage == "label":
        m &= anchors + HORIZON_DAYS * horizon < _d64(eval_start)
    return m


def split_samples(anchors, target, schedule: FoldSchedule, fold_index: int, horizon: int,
                  leakage: str = "label"):
    """Row indices (train, validation) for one fold; rows with a NaN target are skipped."""
    if not 0 <= fold_index < len(schedule.folds):
        raise IndexError(f"fold_index {fold_index} out of range")
    anchors = np.asarray(anchors, dtype="datetime64[D]")
    has_y = np.isfinite(np.asarray(target, dtype=np.float64))
    vs, ve = schedule.folds[fold_index]
    train = np.flatnonzero(_train_mask(anchors, schedule.base_start, vs, horizon, leakage) & has_y)
    val = np.flatnonzero((anchors >= _d64(vs)) & (anchors <= _d64(ve)) & has_y)
    if len(train) == 0 or len(val) == 0:
        raise EmptyFold(f"fold {fold_index} (horizon {horizon}, {leakage}): "
                        f"{len(train)} training / {len(val)} validation rows")
    return train, val


def holdout_split(anchors, target, schedule: FoldSchedule, horizon: int, leakage: str = "label"):
    """Row indices (train, holdout). Train is everything usable before the holdout start."""
    anchors = np.asarray(anchors, dtype="datetime64[D]")
    has_y = np.isfinite(np.asarray(target, dtype=np.float64))
    train = np.flatnonzero(_train_mask(anchors, schedule.base_start, schedule.holdout_start,
                                       horizon, leakage) & has_y)
    hold = anchors >= _d64(schedule.holdout_start)
    if horizon in schedule.holdout_end:
        hold &= anchors <= _d64(schedule.holdout_end[horizon])
    hold = np.flatnonzero(hold & has_y)
    if len(train) == 0:
        raise EmptyFold(f"no training rows before holdout start (horizon {horizon})")
    return train, hold


def fold_splits(anchors, target, schedule, horizon, leakage="label"):
    """(fold_index, train, val) for every fold that is non-empty; empty folds are logged and skipped."""
    out = []
    for i in range(len(schedule.folds)):
        try:
            tr, va = split_samples(anchors, target, schedule, i, horizon, leakage)
        except EmptyFold as exc:
            log.warning("skipping %s", exc)
            continue
        out.append((i, tr, va))
    if not out:
        raise EmptyFold(f"every fold is empty for horizon {horizon} ({leakage} leakage)")
    return out


def rmse(y, yhat) -> float:
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise ValueError("y and yhat differ in shape")
    if y.size == 0:
        raise EmptyInput("rmse of an empty sample")
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def cv_rmse(fold_mses) -> float:
    """Root of the mean of per-fold MSEs."""
    m = np.asarray(fold_mses, dtype=np.float64)
    if m.size == 0:
        raise EmptyInput("cv_rmse of zero folds")
    # sorted so the float sum does not depend on fold order
    return float(np.sqrt(np.mean(np.sort(m))))


@dataclass
class Metrics:
    horizon: int
    model: str
    cv_rmse: float
    holdout_rmse: float
    fold_mses: list
    n_train: int
    n_holdout: int
    skipped_folds: list = field(default_factory=list)
    governorate_residuals: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "model": self.model,
            "cv_rmse": self.cv_rmse,
            "holdout_rmse": self.holdout_rmse,
            "fold_mses": list(self.fold_mses),
            "n_train": self.n_train,
            "n_holdout": self.n_holdout,
            "skipped_folds": list(self.skipped_folds),
            "governorate_residuals": self.governorate_residuals,
        }


@dataclass
class Evaluation:
    metrics: Metrics
    cv_pred: np.ndarray       # out-of-fold prediction per row (NaN if never validated)
    cv_fold: np.ndarray       # fold index that produced cv_pred, -1 otherwise
    holdout_rows: np.ndarray
    holdout_pred: np.ndarray
    final_model: object


def evaluate(model_spec, X, y, anchors, schedule: FoldSchedule, horizon: int,
             leakage: str = "label", governorate=None, model_name: str = "model") -> Evaluation:
    """Fold-wise and holdout scoring of ``model_spec``.

    ``model_spec(X_train, y_train)`` must return an object with ``predict(X)``.
    Rows validated by more than one fold keep the earliest fold's prediction.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    anchors = np.asarray(anchors, dtype="datetime64[D]")
    n = len(y)
    cv_pred = np.full(n, np.nan)
    cv_fold = np.full(n, -1, dtype=np.int64)
    splits = fold_splits(anchors, y, schedule, horizon, leakage)
    skipped = sorted(set(range(len(schedule.folds))) - {i for i, _, _ in splits})
    mses = []
    for i, tr, va in splits:
        model = model_spec(X[tr], y[tr])
        pred = model.predict(X[va])
        mses.append(float(np.mean((y[va] - pred) ** 2)))
        fresh = cv_fold[va] < 0
        cv_pred[va[fresh]] = pred[fresh]
        cv_fold[va[fresh]] = i
    tr, ho = holdout_split(anchors, y, schedule, horizon, leakage)
    final = model_spec(X[tr], y[tr])
    ho_pred = final.predict(X[ho]) if len(ho) else np.zeros(0)
    resid = {}
    if governorate is not None and len(ho):
        gov = np.asarray(governorate)[ho]
        for g in sorted(set(gov)):
            r = y[ho][gov == g] - ho_pred[gov == g]
            resid[str(g)] = {"n": int(r.size), "mean_residual": float(r.mean()),
                             "rmse": float(np.sqrt(np.mean(r ** 2)))}
    metrics = Metrics(
        horizon=horizon,
        model=model_name,
        cv_rmse=cv_rmse(mses),
        holdout_rmse=rmse(y[ho], ho_pred) if len(ho) else float("nan"),
        fold_mses=mses,
        n_train=int(len(tr)),
        n_holdout=int(len(ho)),
        skipped_folds=skipped,
        governorate_residuals=resid,
    )
    return Evaluation(metrics, cv_pred, cv_fold, ho, ho_pred, final)
