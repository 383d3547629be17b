"""Gradient-boosted regression trees with second-order (Newton) split gain.

Squared-error objective, so each row has gradient ``pred - y`` and hessian 1.
Splits are found by exact greedy enumeration over pre-sorted columns: every
midpoint between adjacent distinct values of an allowed feature is scored with

    gain = 1/2 * [G_L^2/(H_L+lam) + G_R^2/(H_R+lam) - G^2/(H+lam)] - gamma

and a node splits only when the best gain is strictly positive and both
children carry at least ``min_child_weight`` hessian mass. Leaves get weight
``-G/(H+lam)``; the ensemble predicts ``base_score + eta * sum(leaf values)``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .errors import DimensionMismatch, EmptyTrainingSet, NonFiniteInput

MODEL_FORMAT = "choleracast-gbt"
MODEL_VERSION = 1
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class GbtParams:
    n_rounds: int = 100
    eta: float = 0.1
    max_depth: int = 4
    min_child_weight: float = 1.0
    reg_lambda: float = 1.0
    gamma: float = 0.0
    subsample: float = 1.0
    colsample: float = 1.0
    seed: int = 0

    def __post_init__(self):
        checks = [
            (self.n_rounds >= 0, "n_rounds must be >= 0"),
            (0 < self.eta <= 1, "eta must lie in (0, 1]"),
            (self.max_depth >= 1, "max_depth must be >= 1"),
            (self.min_child_weight >= 0, "min_child_weight must be >= 0"),
            (self.reg_lambda >= 0, "reg_lambda must be >= 0"),
            (self.gamma >= 0, "gamma must be >= 0"),
            (0 < self.subsample <= 1, "subsample must lie in (0, 1]"),
            (0 < self.colsample <= 1, "colsample must lie in (0, 1]"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)
        for name in ("eta", "min_child_weight", "reg_lambda", "gamma", "subsample", "colsample"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def replace(self, **changes) -> "GbtParams":
        d = asdict(self)
        d.update(changes)
        return GbtParams(**d)

    @classmethod
    def from_dict(cls, d: dict) -> "GbtParams":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        for k in ("n_rounds", "max_depth", "seed"):
            if k in known:
                known[k] = int(round(known[k]))
        return cls(**known)


@dataclass
class Tree:
    """Flat node arrays; node 0 is the root, ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        def rec(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(rec(self.left[i]), rec(self.right[i]))

        return rec(0)

    def to_preorder(self) -> list:
        out = []

        def rec(i):
            if self.feature[i] < 0:
                out.append({"w": float(self.value[i])})
                return
            out.append({"f": int(self.feature[i]), "t": float(self.threshold[i]), "g": float(self.gain[i])})
            rec(self.left[i])
            rec(self.right[i])

        rec(0)
        return out

    @classmethod
    def from_preorder(cls, nodes: list) -> "Tree":
        n = len(nodes)
        feature = np.full(n, -1, dtype=np.int64)
        threshold = np.zeros(n)
        left = np.full(n, -1, dtype=np.int64)
        right = np.full(n, -1, dtype=np.int64)
        value = np.zeros(n)
        gain = np.zeros(n)
        pos = 0

        def rec():
            nonlocal pos
            i = pos
            node = nodes[i]
            pos += 1
            if "w" in node:
                value[i] = node["w"]
                return i
            feature[i] = node["f"]
            threshold[i] = node["t"]
            gain[i] = node["g"]
            left[i] = rec()
            right[i] = rec()
            return i

        rec()
        if pos != n:
            raise ValueError("malformed preorder tree dump")
        return cls(feature, threshold, left, right, value, gain)


@dataclass
class GbtEnsemble:
    base_score: float
    eta: float
    n_features: int
    params: GbtParams
    trees: list = field(default_factory=list)

    def predict(self, X) -> np.ndarray:
        return predict(self, X)

    def to_json(self) -> str:
        doc = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "params": asdict(self.params),
            "base_score": float(self.base_score),
            "eta": float(self.eta),
            "n_features": int(self.n_features),
            "trees": [t.to_preorder() for t in self.trees],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "GbtEnsemble":
        doc = json.loads(text)
        if doc.get("format") != MODEL_FORMAT:
            raise ValueError(f"not a {MODEL_FORMAT} model file")
        return cls(
            base_score=doc["base_score"],
            eta=doc["eta"],
            n_features=doc["n_features"],
            params=GbtParams.from_dict(doc["params"]),
            trees=[Tree.from_preorder(t) for t in doc["trees"]],
        )

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "GbtEnsemble":
        return cls.from_json(Path(path).read_text())


# ---------------------------------------------------------------- kernels


@njit(cache=True)
def _scan_splits(Xs, order, g, h, row_slot, G, H, cols, lam, gamma, mcw):
    # Xs[c, k] is the k-th smallest value of column c, taken by row order[c, k].
    n_slots = G.shape[0]
    n = order.shape[1]
    best_gain = np.zeros(n_slots)
    best_feat = np.full(n_slots, -1, dtype=np.int64)
    best_thr = np.zeros(n_slots)
    parent = np.empty(n_slots)
    for s in range(n_slots):
        parent[s] = G[s] * G[s] / (H[s] + lam)
    GL = np.zeros(n_slots)
    HL = np.zeros(n_slots)
    last = np.zeros(n_slots)
    seen = np.zeros(n_slots, dtype=np.bool_)
    for ci in range(cols.shape[0]):
        c = cols[ci]
        GL[:] = 0.0
        HL[:] = 0.0
        seen[:] = False
        for k in range(n):
            r = order[c, k]
            s = row_slot[r]
            if s < 0:
                continue
            v = Xs[c, k]
            if seen[s] and v != last[s]:
                hl = HL[s]
                hr = H[s] - hl
                if hl >= mcw and hr >= mcw:
                    gl = GL[s]
                    gr = G[s] - gl
                    gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent[s]) - gamma
                    # gains equal up to rounding count as ties, so the earlier
                    # (lower feature, smaller threshold) candidate is kept
                    if gain > best_gain[s] and (best_feat[s] < 0 or gain > best_gain[s] * (1.0 + TIE_RTOL)):
                        best_gain[s] = gain
                        best_feat[s] = c
                        thr = 0.5 * (last[s] + v)
                        if not last[s] < thr:
                            thr = v
                        best_thr[s] = thr
            GL[s] += g[r]
            HL[s] += h[r]
            last[s] = v
            seen[s] = True
    return best_feat, best_thr, best_gain


@njit(cache=True)
def _slot_sums(g, h, row_slot, n_slots):
    G = np.zeros(n_slots)
    H = np.zeros(n_slots)
    for r in range(g.shape[0]):
        s = row_slot[r]
        if s >= 0:
            G[s] += g[r]
            H[s] += h[r]
    return G, H


@njit(cache=True)
def _grow(XT, Xs, order, g, h, active, cols, max_depth, lam, gamma, mcw):
    n = g.shape[0]
    n_active = 0
    for r in range(n):
        if active[r]:
            n_active += 1
    cap = 2 * n_active + 1
    if max_depth < 30:
        cap = min(cap, 2 ** (max_depth + 1) - 1)
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    gain = np.zeros(cap)
    nodeG = np.zeros(cap)
    nodeH = np.zeros(cap)

    node_of = np.full(n, -1, dtype=np.int64)
    for r in range(n):
        if active[r]:
            node_of[r] = 0
    G0, H0 = _slot_sums(g, h, node_of, 1)
    nodeG[0] = G0[0]
    nodeH[0] = H0[0]
    frontier = np.zeros(1, dtype=np.int64)
    n_nodes = 1
    depth = 0
    slot_of = np.full(cap, -1, dtype=np.int64)
    row_slot = np.full(n, -1, dtype=np.int64)
    while frontier.shape[0] > 0:
        nf = frontier.shape[0]
        if depth >= max_depth:
            break
        for s in range(nf):
            slot_of[frontier[s]] = s
        for r in range(n):
            nd = node_of[r]
            row_slot[r] = slot_of[nd] if nd >= 0 else -1
        G = np.empty(nf)
        H = np.empty(nf)
        for s in range(nf):
            G[s] = nodeG[frontier[s]]
            H[s] = nodeH[frontier[s]]
        bf, bt, bg = _scan_splits(Xs, order, g, h, row_slot, G, H, cols, lam, gamma, mcw)
        n_split = 0
        for s in range(nf):
            if bf[s] >= 0:
                n_split += 1
        nxt = np.empty(2 * n_split, dtype=np.int64)
        j = 0
        for s in range(nf):
            nd = frontier[s]
            slot_of[nd] = -1
            if bf[s] >= 0:
                feature[nd] = bf[s]
                threshold[nd] = bt[s]
                gain[nd] = bg[s]
                left[nd] = n_nodes
                right[nd] = n_nodes + 1
                nxt[j] = n_nodes
                nxt[j + 1] = n_nodes + 1
                j += 2
                n_nodes += 2
        for r in range(n):
            nd = node_of[r]
            if nd < 0:
                continue
            f = feature[nd]
            if f < 0:
                node_of[r] = -1
                continue
            child = left[nd] if XT[f, r] < threshold[nd] else right[nd]
            node_of[r] = child
            nodeG[child] += g[r]
            nodeH[child] += h[r]
        frontier = nxt
        depth += 1
    for i in range(n_nodes):
        if feature[i] < 0:
            value[i] = -nodeG[i] / (nodeH[i] + lam)
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), gain[:n_nodes].copy())


@njit(cache=True)
def _add_tree(X, feature, threshold, left, right, value, scale, out):
    for i in range(X.shape[0]):
        nd = 0
        while feature[nd] >= 0:
            if X[i, feature[nd]] < threshold[nd]:
                nd = left[nd]
            else:
                nd = right[nd]
        out[i] += scale * value[nd]


# ---------------------------------------------------------------- public API


def _as_matrix(X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d matrix, got shape {X.shape}")
    return X


def presort(X):
    """Column-wise stable sort order and sorted values, both shaped (p, n).

    Callers that fit many models on column subsets of one matrix can compute
    this once and slice rows ``[cols]`` out of both arrays.
    """
    X = _as_matrix(X)
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
    Xs = np.ascontiguousarray(np.take_along_axis(X, order.T, axis=0).T)
    return order, Xs


def find_best_split(X, grad, hess, rows, cols, params: GbtParams):
    """Best (feature, threshold, gain) for the node holding ``rows``, or None."""
    X = _as_matrix(X)
    n = X.shape[0]
    order, Xs = presort(X)
    row_slot = np.full(n, -1, dtype=np.int64)
    row_slot[np.asarray(rows, dtype=np.int64)] = 0
    g = np.ascontiguousarray(grad, dtype=np.float64)
    h = np.ascontiguousarray(hess, dtype=np.float64)
    G, H = _slot_sums(g, h, row_slot, 1)
    cols = np.sort(np.asarray(cols, dtype=np.int64))
    bf, bt, bg = _scan_splits(Xs, order, g, h, row_slot, G, H, cols,
                              float(params.reg_lambda), float(params.gamma),
                              float(params.min_child_weight))
    if bf[0] < 0:
        return None
    return int(bf[0]), float(bt[0]), float(bg[0])


def fit(X, y, params: GbtParams, presorted=None) -> GbtEnsemble:
    X = _as_matrix(X)
    y = np.ascontiguousarray(y, dtype=np.float64).ravel()
    n, p = X.shape
    if n == 0 or y.shape[0] == 0:
        raise EmptyTrainingSet("cannot fit on zero rows")
    if y.shape[0] != n:
        raise DimensionMismatch(f"X has {n} rows but y has {y.shape[0]}")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise NonFiniteInput("X and y must be finite")

    base = float(np.mean(y))
    ens = GbtEnsemble(base_score=base, eta=params.eta, n_features=p, params=params)
    if params.n_rounds == 0 or p == 0:
        return ens
    order, Xs = presort(X) if presorted is None else presorted
    XT = np.ascontiguousarray(X.T)
    rng = np.random.default_rng(params.seed)
    pred = np.full(n, base)
    h = np.ones(n)
    n_rows = max(1, int(round(params.subsample * n)))
    n_cols = max(1, int(round(params.colsample * p)))
    all_rows = np.ones(n, dtype=np.bool_)
    all_cols = np.arange(p, dtype=np.int64)
    lam, gamma, mcw = float(params.reg_lambda), float(params.gamma), float(params.min_child_weight)
    for _ in range(params.n_rounds):
        if n_rows < n:
            active = np.zeros(n, dtype=np.bool_)
            active[rng.choice(n, size=n_rows, replace=False)] = True
        else:
            active = all_rows
        if n_cols < p:
            cols = np.sort(rng.choice(p, size=n_cols, replace=False)).astype(np.int64)
        else:
            cols = all_cols
        g = pred - y
        tree = Tree(*_grow(XT, Xs, order, g, h, active, cols, params.max_depth, lam, gamma, mcw))
        ens.trees.append(tree)
        _add_tree(X, tree.feature, tree.threshold, tree.left, tree.right, tree.value, ens.eta, pred)
    return ens


def predict(ens: GbtEnsemble, X) -> np.ndarray:
    X = _as_matrix(X)
    if X.shape[1] != ens.n_features:
        raise DimensionMismatch(f"model expects {ens.n_features} columns, got {X.shape[1]}")
    out = np.full(X.shape[0], float(ens.base_score))
    for t in ens.trees:
        _add_tree(X, t.feature, t.threshold, t.left, t.right, t.value, float(ens.eta), out)
    return out


def feature_importance(ens: GbtEnsemble) -> np.ndarray:
    """Total realized split gain per column index; unused columns get 0."""
    imp = np.zeros(ens.n_features)
    for t in ens.trees:
        internal = t.feature >= 0
        np.add.at(imp, t.feature[internal], t.gain[internal])
    return imp
