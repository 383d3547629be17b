"""Per-horizon feature selection.

Stages, each a subset of the previous one:
  significant    BY q-value of a rank test against the target <= q_cut
  decorrelated   greedy scan by ascending (q, id); drop |r| > threshold vs kept
  ranked         total split gain of one boosted ensemble, descending
  final          forward selection on rolling-fold CV-RMSE
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import gbtree
from .cv import cv_rmse
from .errors import DegenerateGroups
from .gbtree import GbtParams
from .hypotests import benjamini_yekutieli, kendall_test, mann_whitney_test

log = logging.getLogger(__name__)


def is_binary(col) -> bool:
    return bool(np.isin(np.asarray(col), (0.0, 1.0)).all())


@dataclass
class TestResult:
    descriptor: str
    test: str           # "kendall" | "mann_whitney"
    statistic: float
    p_value: float
    q_value: float = 1.0

    def to_dict(self) -> dict:
        return {"descriptor": self.descriptor, "test": self.test, "statistic": self.statistic,
                "p_value": self.p_value, "q_value": self.q_value}


def significance_tests(X, y, ids) -> list[TestResult]:
    """One rank test per column, BY-adjusted over all columns."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    out = []
    for j, d in enumerate(ids):
        col = X[:, j]
        if is_binary(col):
            try:
                stat, p = mann_whitney_test(col, y)
            except DegenerateGroups:
                stat, p = 0.0, 1.0
            out.append(TestResult(d, "mann_whitney", float(stat), float(p)))
        else:
            tau, p = kendall_test(col, y)
            out.append(TestResult(d, "kendall", float(tau), float(p)))
    q = benjamini_yekutieli([r.p_value for r in out])
    for r, qv in zip(out, q):
        r.q_value = float(qv)
    return out


def significance_filter(X, y, ids, q_cut: float = 0.001):
    """Survivor ids ordered by (q, id), plus every column's TestResult."""
    results = significance_tests(X, y, ids)
    keep = sorted((r for r in results if r.q_value <= q_cut), key=lambda r: (r.q_value, r.descriptor))
    if not keep:
        log.warning("no feature survived q <= %g", q_cut)
    return [r.descriptor for r in keep], results


def _standardize(X):
    X = np.asarray(X, dtype=np.float64)
    Z = X - X.mean(axis=0)
    norm = np.sqrt(np.sum(Z * Z, axis=0))
    const = (X.max(axis=0) == X.min(axis=0)) | (norm == 0)
    Z[:, const] = 0.0
    Z[:, ~const] /= norm[~const]
    return Z, const


def correlation_prune(X, ids, threshold: float = 0.97):
    """Greedy decorrelation in the given column order (callers pass ascending q).

    Returns (kept ids, dropped log). Each log entry names the dropped column,
    the already-kept column it correlates with most, and that r.
    """
    Z, const = _standardize(X)
    kept, dropped = [], []
    for j, d in enumerate(ids):
        if kept and not const[j]:
            r = Z[:, kept].T @ Z[:, j]
            k = int(np.argmax(np.abs(r)))
            if abs(r[k]) > threshold:
                dropped.append({"dropped": d, "kept": ids[kept[k]], "r": float(np.clip(r[k], -1, 1))})
                continue
        kept.append(j)
    return [ids[j] for j in kept], dropped


def importance_rank(X, y, ids, params: GbtParams):
    """Ids by descending total split gain (ties by id), with the gain per id."""
    ens = gbtree.fit(X, y, params)
    imp = gbtree.feature_importance(ens)
    order = sorted(range(len(ids)), key=lambda j: (-imp[j], ids[j]))
    return [ids[j] for j in order], {ids[j]: float(imp[j]) for j in order}


class FoldCache:
    """Per-fold training matrices presorted once, so column subsets fit cheaply."""

    def __init__(self, X, y, splits):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        self.folds = []
        for i, tr, va in splits:
            Xt = np.ascontiguousarray(X[tr])
            self.folds.append((i, Xt, y[tr], gbtree.presort(Xt), X[va], y[va]))

    def fold_mses(self, cols, params: GbtParams) -> list[float]:
        cols = np.asarray(cols, dtype=np.int64)
        out = []
        for _, Xt, yt, (order, Xs), Xv, yv in self.folds:
            pre = (np.ascontiguousarray(order[cols]), np.ascontiguousarray(Xs[cols]))
            ens = gbtree.fit(Xt[:, cols], yt, params, presorted=pre)
            out.append(float(np.mean((yv - gbtree.predict(ens, Xv[:, cols])) ** 2)))
        return out

    def cv_rmse(self, cols, params: GbtParams) -> float:
        return cv_rmse(self.fold_mses(cols, params))


def forward_select(cache: FoldCache, ranked_cols, params: GbtParams, min_delta: float = 1e-4,
                   cap: int = 50, max_candidates: int = None, ids=None):
    """Greedy forward selection over ``ranked_cols`` (column indices into the cache).

    Starts from the top-ranked column; each later candidate is kept iff the
    CV-RMSE with it drops by more than ``min_delta``. Returns (kept columns,
    trajectory). ``max_candidates`` bounds how far down the ranking to look.
    """
    ranked_cols = list(ranked_cols)
    if not ranked_cols:
        raise ValueError("forward_select needs at least one ranked feature")
    name = (lambda c: ids[c]) if ids is not None else (lambda c: int(c))
    pool = ranked_cols if max_candidates is None else ranked_cols[:max_candidates]
    kept = [pool[0]]
    best = cache.cv_rmse(kept, params)
    traj = [{"step": 0, "candidate": name(pool[0]), "cv_rmse": best, "accepted": True, "size": 1}]
    for step, c in enumerate(pool[1:], start=1):
        if len(kept) >= cap:
            break
        score = cache.cv_rmse(kept + [c], params)
        ok = score < best - min_delta
        if ok:
            kept.append(c)
            best = score
        traj.append({"step": step, "candidate": name(c), "cv_rmse": score, "accepted": bool(ok),
                     "size": len(kept)})
        log.debug("forward step %d %s rmse %.6g %s", step, name(c), score, "kept" if ok else "rejected")
    return kept, traj


@dataclass
class SelectionReport:
    horizon: int
    n_candidates: int
    n_rows: int
    tests: list = field(default_factory=list)          # TestResult dicts, candidate order
    significant: list = field(default_factory=list)
    decorrelated: list = field(default_factory=list)
    dropped_pairs: list = field(default_factory=list)
    ranked: list = field(default_factory=list)
    importance: dict = field(default_factory=dict)
    final: list = field(default_factory=list)
    trajectory: list = field(default_factory=list)
    params: dict = field(default_factory=dict)

    def check_nested(self):
        s, d, r, f = map(set, (self.significant, self.decorrelated, self.ranked, self.final))
        assert d <= s and r == d and f <= r, "selection stages are not nested"

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "n_candidates": self.n_candidates,
            "n_rows": self.n_rows,
            "stages": {"significant": self.significant, "decorrelated": self.decorrelated,
                       "ranked": self.ranked, "final": self.final},
            "q_values": {t["descriptor"]: t["q_value"] for t in self.tests
                         if t["descriptor"] in set(self.significant)},
            "tests": self.tests,
            "dropped_pairs": self.dropped_pairs,
            "importance": self.importance,
            "trajectory": self.trajectory,
            "params": self.params,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "SelectionReport":
        st = d["stages"]
        return cls(d["horizon"], d["n_candidates"], d["n_rows"], d.get("tests", []), st["significant"],
                   st["decorrelated"], d.get("dropped_pairs", []), st["ranked"], d.get("importance", {}),
                   st["final"], d.get("trajectory", []), d.get("params", {}))
