"""Windowed statistics over each frame series, one column per descriptor.

A descriptor is (series, window_days, statistic); its window covers the
``window_days`` days ending at the sample's anchor, inclusive. Column ids look
like ``rainfall__w14__mean``.

Degenerate windows (too short, or constant) map to 0 for every statistic whose
textbook value would be undefined, so the matrix is always dense and finite.
Constancy is decided by exact equality of max and min.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import UnknownStatistic
from .prep import SERIES_NAMES, Panel

WINDOWS = (7, 14, 28, 42, 56)

# variance is deliberately absent: it is a monotone transform of std and would
# only add a redundant column.
CATALOG = (
    "mean", "median", "min", "max", "std", "sum", "first", "last", "range",
    "abs_energy", "mean_abs_change", "mean_change", "abs_sum_of_changes",
    "count_above_mean", "count_below_mean", "longest_strike_above_mean",
    "number_peaks_1", "number_peaks_3", "autocorr_lag1", "skewness", "kurtosis",
    "linear_slope", "quantile_25", "quantile_75", "above_mean_last",
)


@dataclass(frozen=True, order=True)
class FeatureDescriptor:
    series_name: str
    window_days: int
    statistic_id: str

    @property
    def id(self) -> str:
        return f"{self.series_name}__w{self.window_days}__{self.statistic_id}"

    @classmethod
    def parse(cls, s: str) -> "FeatureDescriptor":
        series, w, stat = s.split("__")
        if not w.startswith("w"):
            raise ValueError(f"bad descriptor id {s!r}")
        return cls(series, int(w[1:]), stat)


def default_descriptors() -> list[FeatureDescriptor]:
    return sorted(FeatureDescriptor(s, w, st) for s in SERIES_NAMES for w in WINDOWS for st in CATALOG)


def _peaks(W, reach):
    m, n = W.shape
    if n < 2 * reach + 1:
        return np.zeros(m)
    core = W[:, reach:n - reach]
    ok = np.ones(core.shape, dtype=bool)
    for k in range(1, reach + 1):
        ok &= core > W[:, reach - k:n - reach - k]
        ok &= core > W[:, reach + k:n - reach + k]
    return ok.sum(axis=1).astype(float)


def window_statistics(W) -> dict[str, np.ndarray]:
    """All catalog statistics for each row of the (m, n) window stack ``W``."""
    W = np.asarray(W, dtype=np.float64)
    m, n = W.shape
    const = W.max(axis=1) == W.min(axis=1)
    live = ~const
    zeros = np.zeros(m)
    mean = np.mean(W, axis=1)
    dev = W - mean[:, None]
    m2 = np.mean(dev ** 2, axis=1)
    m2[const] = 0.0
    out = {
        "mean": mean,
        "median": np.median(W, axis=1),
        "min": W.min(axis=1),
        "max": W.max(axis=1),
        "std": np.sqrt(m2),
        "sum": np.sum(W, axis=1),
        "first": W[:, 0].copy(),
        "last": W[:, -1].copy(),
        "abs_energy": np.sum(W * W, axis=1),
        "quantile_25": np.quantile(W, 0.25, axis=1),
        "quantile_75": np.quantile(W, 0.75, axis=1),
    }
    out["range"] = out["max"] - out["min"]

    if n >= 2:
        d = np.diff(W, axis=1)
        out["mean_abs_change"] = np.mean(np.abs(d), axis=1)
        out["abs_sum_of_changes"] = np.sum(np.abs(d), axis=1)
        out["mean_change"] = (W[:, -1] - W[:, 0]) / (n - 1)
        idx = np.arange(n, dtype=np.float64)
        ic = idx - idx.mean()
        out["linear_slope"] = dev @ ic / np.dot(ic, ic)
        out["linear_slope"][const] = 0.0
    else:
        for k in ("mean_abs_change", "abs_sum_of_changes", "mean_change", "linear_slope"):
            out[k] = zeros.copy()

    above = (W > mean[:, None]) & live[:, None]
    below = (W < mean[:, None]) & live[:, None]
    out["count_above_mean"] = above.sum(axis=1).astype(float)
    out["count_below_mean"] = below.sum(axis=1).astype(float)
    run = np.zeros(m)
    best = np.zeros(m)
    for j in range(n):
        run = (run + 1.0) * above[:, j]
        np.maximum(best, run, out=best)
    out["longest_strike_above_mean"] = best
    out["above_mean_last"] = above[:, -1].astype(float)

    out["number_peaks_1"] = _peaks(W, 1)
    out["number_peaks_3"] = _peaks(W, 3)

    ac = zeros.copy()
    if n >= 3:
        a, b = W[:, :-1], W[:, 1:]
        ok = (a.max(axis=1) != a.min(axis=1)) & (b.max(axis=1) != b.min(axis=1))
        if ok.any():
            a, b = a[ok], b[ok]
            da = a - a.mean(axis=1, keepdims=True)
            db = b - b.mean(axis=1, keepdims=True)
            da /= np.max(np.abs(da), axis=1, keepdims=True)
            db /= np.max(np.abs(db), axis=1, keepdims=True)
            r = np.sum(da * db, axis=1) / np.sqrt(np.sum(da * da, axis=1) * np.sum(db * db, axis=1))
            ac[ok] = np.clip(r, -1.0, 1.0)
    out["autocorr_lag1"] = ac

    skew = zeros.copy()
    kurt = zeros.copy()
    if live.any():
        # rescale by the largest deviation first so tiny spreads cannot underflow
        u = dev[live] / np.max(np.abs(dev[live]), axis=1, keepdims=True)
        u2 = np.mean(u * u, axis=1)
        if n >= 3:
            skew[live] = np.sqrt(n * (n - 1.0)) / (n - 2.0) * np.mean(u ** 3, axis=1) / u2 ** 1.5
        if n >= 4:
            g2 = np.mean(u ** 4, axis=1) / u2 ** 2 - 3.0
            kurt[live] = (n - 1.0) / ((n - 2.0) * (n - 3.0)) * ((n + 1.0) * g2 + 6.0)
    out["skewness"] = skew
    out["kurtosis"] = kurt
    return out


def compute_statistic(statistic_id: str, window_values) -> float:
    if statistic_id not in CATALOG:
        raise UnknownStatistic(statistic_id)
    v = np.asarray(window_values, dtype=np.float64).ravel()
    if v.size < 1:
        raise ValueError("window must hold at least one value")
    if not np.isfinite(v).all():
        raise ValueError("window values must be finite")
    return float(window_statistics(v[None, :])[statistic_id][0])


@dataclass
class FeatureMatrix:
    descriptors: list
    values: np.ndarray          # (n_samples, n_descriptors)
    governorate: np.ndarray
    anchor: np.ndarray
    targets: np.ndarray         # (n_samples, 4), NaN where unavailable

    @property
    def ids(self) -> list[str]:
        return [d.id for d in self.descriptors]

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def columns(self, ids) -> np.ndarray:
        pos = {d: i for i, d in enumerate(self.ids)}
        return self.values[:, [pos[i] for i in ids]]

    def select(self, ids) -> "FeatureMatrix":
        pos = {d: i for i, d in enumerate(self.ids)}
        cols = [pos[i] for i in ids]
        return FeatureMatrix([self.descriptors[c] for c in cols], self.values[:, cols],
                             self.governorate, self.anchor, self.targets)

    def take(self, rows) -> "FeatureMatrix":
        return FeatureMatrix(self.descriptors, self.values[rows], self.governorate[rows],
                             self.anchor[rows], self.targets[rows])

    def write_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["governorate", "t"] + self.ids + ["y1", "y2", "y3", "y4"])
            for r in range(self.n_rows):
                ys = ["" if np.isnan(v) else repr(float(v)) for v in self.targets[r]]
                w.writerow([self.governorate[r], str(self.anchor[r])]
                           + [repr(float(v)) for v in self.values[r]] + ys)


def extract_features(panel: Panel, descriptors=None) -> FeatureMatrix:
    descriptors = default_descriptors() if descriptors is None else list(descriptors)
    for d in descriptors:
        if d.statistic_id not in CATALOG:
            raise UnknownStatistic(d.statistic_id)
    values = np.empty((len(panel), len(descriptors)))
    groups = {}
    for j, d in enumerate(descriptors):
        groups.setdefault((d.series_name, d.window_days), []).append((j, d.statistic_id))
    for gid in np.unique(panel.governorate):
        rows = np.flatnonzero(panel.governorate == gid)
        idx = panel.anchor_index[rows]
        if (idx < max(d.window_days for d in descriptors) - 1).any():
            raise ValueError(f"{gid}: some anchors lack history for the longest window")
        frame = panel.frames[gid]
        for (series, w), cols in groups.items():
            view = sliding_window_view(frame.series[series], w)
            stats = window_statistics(view[idx - w + 1])
            for j, st in cols:
                values[rows, j] = stats[st]
    if not np.isfinite(values).all():
        raise FloatingPointError("feature extraction produced non-finite values")
    return FeatureMatrix(descriptors, values, panel.governorate.copy(), panel.anchor.copy(),
                         panel.targets.copy())
