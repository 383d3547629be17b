"""Shared fixtures-as-functions for the test modules."""
import datetime as dt

import numpy as np

from choleracast.cv import FoldSchedule

DAY = dt.timedelta(days=1)


def random_schedule(rng, origin=dt.date(2017, 7, 1)) -> FoldSchedule:
    """A conforming schedule: growing base, 1-7 chronological folds that may share a boundary day."""
    base_start = origin + int(rng.integers(0, 30)) * DAY
    base_end = base_start + int(rng.integers(0, 60)) * DAY
    folds = []
    for _ in range(int(rng.integers(1, 8))):
        if not folds:
            start = base_end + DAY
        elif rng.random() < 0.5:
            start = folds[-1][1]                      # shared boundary day
        else:
            start = folds[-1][1] + int(rng.integers(1, 5)) * DAY
        end = start + int(rng.integers(0, 25)) * DAY
        folds.append((start, end))
    holdout = folds[-1][1] + int(rng.integers(1, 20)) * DAY
    return FoldSchedule(base_start, base_end, tuple(folds), holdout)


def daily_anchors(start, n_days, n_units=3):
    days = np.arange(np.datetime64(start, "D"), np.datetime64(start, "D") + n_days)
    return np.tile(days, n_units)


def lookahead_violations(anchors, schedule, horizon, leakage, split_samples, fold_splits):
    """Exhaustive scan of every fold: list of human-readable violations (empty if none)."""
    from choleracast.prep import HORIZON_DAYS

    bad = []
    y = np.zeros(len(anchors))
    for i, tr, va in fold_splits(anchors, y, schedule, horizon, leakage):
        vs = np.datetime64(schedule.folds[i][0], "D")
        if set(tr.tolist()) & set(va.tolist()):
            bad.append(f"fold {i}: row in both train and validation")
        if len(tr) and len(va) and anchors[tr].max() >= anchors[va].min():
            bad.append(f"fold {i}: train anchor {anchors[tr].max()} >= validation anchor {anchors[va].min()}")
        if leakage == "label" and len(tr) and (anchors[tr] + HORIZON_DAYS * horizon >= vs).any():
            bad.append(f"fold {i}: a training label window reaches {vs}")
    return bad
