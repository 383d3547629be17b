import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from choleracast import gbtree
from choleracast.errors import DimensionMismatch, EmptyTrainingSet, NonFiniteInput
from choleracast.gbtree import GbtEnsemble, GbtParams

X4 = np.array([[1.0], [2.0], [3.0], [4.0]])
Y4 = np.array([1.0, 1.0, 3.0, 3.0])
P4 = GbtParams(n_rounds=1, eta=1.0, max_depth=1, min_child_weight=0.0, reg_lambda=0.0, gamma=0.0)


def oracle_split(X, g, h, rows, cols, lam, gamma, mcw, rtol=1e-12):
    """Exhaustive enumeration; ties within relative ``rtol`` go to (lowest feature, smallest threshold)."""
    rows = np.asarray(rows)
    G, H = g[rows].sum(), h[rows].sum()
    cands = []
    for f in sorted(cols):
        vals = np.unique(X[rows, f])
        for a, b in zip(vals[:-1], vals[1:]):
            t = 0.5 * (a + b)
            t = t if a < t else b
            left = rows[X[rows, f] < t]
            right = rows[X[rows, f] >= t]
            GL, HL = g[left].sum(), h[left].sum()
            GR, HR = G - GL, H - HL
            if HL < mcw or HR < mcw or HL + lam == 0 or HR + lam == 0:
                continue
            gain = 0.5 * (GL**2 / (HL + lam) + GR**2 / (HR + lam) - G**2 / (H + lam)) - gamma
            cands.append((f, t, gain))
    if not cands:
        return None
    best = max(c[2] for c in cands)
    if best <= 0:
        return None
    return next(c for c in cands if c[2] * (1 + rtol) >= best)


def random_instance(rng):
    n = int(rng.integers(2, 101))
    p = int(rng.integers(1, 6))
    X = rng.integers(0, int(rng.integers(2, 12)), size=(n, p)).astype(float)
    if rng.random() < 0.5:
        X += rng.normal(size=(n, p)) * (rng.random() < 0.5)
    g = rng.normal(size=n)
    h = np.ones(n)
    rows = np.sort(rng.choice(n, size=int(rng.integers(2, n + 1)), replace=False))
    cols = np.sort(rng.choice(p, size=int(rng.integers(1, p + 1)), replace=False))
    params = GbtParams(max_depth=int(rng.integers(1, 3)), reg_lambda=float(rng.choice([0.0, 0.5, 1.0, 5.0])),
                       gamma=float(rng.choice([0.0, 0.01, 0.5])), min_child_weight=float(rng.integers(0, 4)))
    return X, g, h, rows, cols, params


def check_split_oracle(n_instances=200, seed=0):
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(n_instances):
        X, g, h, rows, cols, pr = random_instance(rng)
        got = gbtree.find_best_split(X, g, h, rows, cols, pr)
        want = oracle_split(X, g, h, rows, cols, pr.reg_lambda, pr.gamma, pr.min_child_weight)
        if (got is None) != (want is None):
            mismatches += 1
        elif got is not None and not (got[0] == want[0] and got[1] == want[1] and abs(got[2] - want[2]) <= 1e-12):
            mismatches += 1
    return mismatches


def test_split_oracle_200_instances():
    gbtree.find_best_split(X4, Y4 - 2, np.ones(4), np.arange(4), [0], P4)   # compile outside the clock
    t0 = time.perf_counter()
    assert check_split_oracle() == 0
    assert time.perf_counter() - t0 < 10


def test_four_row_fixture():
    f, t, gain = gbtree.find_best_split(X4, Y4 - Y4.mean(), np.ones(4), np.arange(4), [0], P4)
    assert (f, t, gain) == (0, 2.5, 2.0)
    ens = gbtree.fit(X4, Y4, P4)
    assert ens.base_score == 2.0
    assert gbtree.predict(ens, X4).tolist() == [1.0, 1.0, 3.0, 3.0]
    assert ens.trees[0].to_preorder() == [{"f": 0, "t": 2.5, "g": 2.0}, {"w": -1.0}, {"w": 1.0}]
    assert gbtree.feature_importance(ens).tolist() == [2.0]


def test_split_edge_cases():
    X = np.ones((5, 2))
    assert gbtree.find_best_split(X, np.arange(5.0), np.ones(5), np.arange(5), [0, 1], GbtParams()) is None
    Xd = np.column_stack([X4[:, 0], X4[:, 0]])
    assert gbtree.find_best_split(Xd, Y4 - 2, np.ones(4), np.arange(4), [0, 1], P4)[0] == 0
    assert gbtree.find_best_split(Xd, Y4 - 2, np.ones(4), np.arange(4), [1], P4)[0] == 1
    # children with hessian below min_child_weight are not created
    assert gbtree.find_best_split(X4, Y4 - 2, np.ones(4), np.arange(4), [0], P4.replace(min_child_weight=3)) is None


def test_trivial_ensembles():
    y = np.full(4, 7.0)
    ens = gbtree.fit(X4, y, GbtParams(n_rounds=5, gamma=0.1))
    assert all(t.n_nodes == 1 and t.value[0] == 0.0 for t in ens.trees)
    assert (gbtree.predict(ens, X4) == 7.0).all()
    ens = gbtree.fit(X4, Y4, GbtParams(n_rounds=0))
    assert not ens.trees and (gbtree.predict(ens, X4) == 2.0).all()


def test_errors():
    with pytest.raises(EmptyTrainingSet):
        gbtree.fit(np.zeros((0, 2)), np.zeros(0), GbtParams())
    with pytest.raises(NonFiniteInput):
        gbtree.fit(np.array([[np.nan], [1.0]]), np.zeros(2), GbtParams())
    ens = gbtree.fit(X4, Y4, P4)
    with pytest.raises(DimensionMismatch):
        gbtree.predict(ens, np.zeros((2, 3)))
    with pytest.raises(ValueError):
        GbtParams(eta=0.0)


def _data(seed, n=120, p=4):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    y = np.sin(2 * X[:, 0]) + X[:, 1] * (X[:, 2] > 0) + 0.1 * rng.normal(size=n)
    return X, y


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.floats(0.05, 1.0))
def test_training_loss_non_increasing(seed, depth, eta):
    X, y = _data(seed)
    ens = gbtree.fit(X, y, GbtParams(n_rounds=15, eta=eta, max_depth=depth, min_child_weight=0.0))
    pred = np.full(len(y), ens.base_score)
    prev = np.mean((y - pred) ** 2)
    for t in ens.trees:
        one = GbtEnsemble(0.0, ens.eta, ens.n_features, ens.params, [t])
        pred = pred + gbtree.predict(one, X)
        mse = np.mean((y - pred) ** 2)
        assert mse <= prev + 1e-12
        prev = mse


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_depth_bound_thresholds_and_importance(seed):
    X, y = _data(seed)
    X[:, 3] = np.round(X[:, 3])
    pr = GbtParams(n_rounds=10, max_depth=3, subsample=0.7, colsample=0.5, seed=seed)
    ens = gbtree.fit(X, y, pr)
    total = 0.0
    for t in ens.trees:
        assert t.depth() <= 3
        for i in np.flatnonzero(t.feature >= 0):
            # a midpoint of two distinct training values (adjacent within the node's rows)
            vals = np.unique(X[:, t.feature[i]])
            k = np.searchsorted(vals, t.threshold[i])
            assert 0 < k < len(vals)
            assert any(t.threshold[i] == 0.5 * (a + b) for a in vals[:k] for b in vals[k:] if a < b)
            assert t.gain[i] > 0
            total += t.gain[i]
    imp = gbtree.feature_importance(ens)
    assert (imp >= 0).all() and imp.sum() == pytest.approx(total, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_determinism_and_round_trip(seed):
    X, y = _data(seed)
    pr = GbtParams(n_rounds=8, max_depth=3, subsample=0.8, colsample=0.75, seed=seed)
    a, b = gbtree.fit(X, y, pr), gbtree.fit(X, y, pr)
    assert a.to_json() == b.to_json()
    c = GbtEnsemble.from_json(a.to_json())
    assert c.to_json() == a.to_json()
    assert np.array_equal(gbtree.predict(c, X), gbtree.predict(a, X))
    pre = gbtree.presort(X[:, [2, 0]])
    order, Xs = gbtree.presort(X)
    sliced = (np.ascontiguousarray(order[[2, 0]]), np.ascontiguousarray(Xs[[2, 0]]))
    assert np.array_equal(pre[0], sliced[0])
    assert gbtree.fit(X[:, [2, 0]], y, pr, presorted=sliced).to_json() == gbtree.fit(X[:, [2, 0]], y, pr).to_json()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_predict_permutation_equivariant(seed):
    X, y = _data(seed)
    ens = gbtree.fit(X, y, GbtParams(n_rounds=5))
    perm = np.random.default_rng(seed).permutation(len(y))
    assert np.array_equal(gbtree.predict(ens, X[perm]), gbtree.predict(ens, X)[perm])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_monotone_transform_invariance(seed):
    X, y = _data(seed, p=3)
    pr = GbtParams(n_rounds=5, max_depth=2)
    Xt = X.copy()
    Xt[:, 0] = np.exp(X[:, 0])
    Xt[:, 1] = 3 * X[:, 1] ** 3 + 1
    a, b = gbtree.fit(X, y, pr), gbtree.fit(Xt, y, pr)
    same_structure = all(np.array_equal(s.feature, t.feature) for s, t in zip(a.trees, b.trees))
    if same_structure:
        np.testing.assert_allclose(gbtree.predict(a, X), gbtree.predict(b, Xt), rtol=0, atol=1e-9)


def test_large_lambda_shrinks_to_base():
    X, y = _data(3)
    ens = gbtree.fit(X, y, GbtParams(n_rounds=10, reg_lambda=1e12))
    np.testing.assert_allclose(gbtree.predict(ens, X), y.mean(), atol=1e-6)
