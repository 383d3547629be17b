import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from choleracast.cv import default_schedule, fold_splits
from choleracast.gbtree import GbtParams
from choleracast.select import (FoldCache, SelectionReport, correlation_prune, forward_select, importance_rank,
                                is_binary, significance_filter, significance_tests)
from helpers import daily_anchors


def null_survivors(seed, n_rows=300, n_features=1000, q_cut=0.001):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n_rows, n_features))
    X[:, ::10] = rng.integers(0, 2, size=(n_rows, n_features // 10))      # some binary columns too
    y = rng.normal(size=n_rows)
    kept, _ = significance_filter(X, y, [f"f{j}" for j in range(n_features)], q_cut)
    return len(kept)


def test_null_calibration_small():
    assert all(null_survivors(s, n_features=200) < 5 for s in range(3))


def test_planted_signal_found_and_ordered():
    rng = np.random.default_rng(0)
    n = 200
    X = rng.normal(size=(n, 50))
    y = 2 * X[:, 7] + rng.normal(size=n)
    X[:, 3] = (X[:, 7] > 0).astype(float)
    ids = [f"f{j:02d}" for j in range(50)]
    kept, res = significance_filter(X, y, ids)
    assert kept[0] == "f07" and "f03" in kept
    assert {r.descriptor: r.test for r in res}["f03"] == "mann_whitney"
    qs = [next(r.q_value for r in res if r.descriptor == k) for k in kept]
    assert qs == sorted(qs)


def test_degenerate_binary_column_gets_p_one():
    X = np.column_stack([np.ones(30), np.arange(30.0)])
    res = significance_tests(X, np.arange(30.0), ["const", "lin"])
    assert res[0].p_value == 1.0 and is_binary(X[:, 0])


def brute_prune(X, ids, thr):
    kept = []
    for j in range(X.shape[1]):
        ok = True
        for k in kept:
            a, b = X[:, j], X[:, k]
            if a.std() == 0 or b.std() == 0:
                continue
            if abs(np.corrcoef(a, b)[0, 1]) > thr:
                ok = False
                break
        if ok:
            kept.append(j)
    return [ids[j] for j in kept]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.5, 0.99))
def test_prune_matches_pairwise_oracle(seed, thr):
    rng = np.random.default_rng(seed)
    base = rng.normal(size=(60, 4))
    X = np.column_stack([base @ rng.normal(size=4) + 0.3 * rng.normal(size=60) for _ in range(12)]
                        + [np.ones(60)])
    ids = [f"c{j}" for j in range(13)]
    kept, dropped = correlation_prune(X, ids, thr)
    assert kept == brute_prune(X, ids, thr)
    assert all(abs(d["r"]) > thr and d["kept"] in kept for d in dropped)
    assert len(kept) + len(dropped) == 13


def _panel(seed=0, n_days=200, units=4):
    rng = np.random.default_rng(seed)
    anchors = daily_anchors("2017-07-01", n_days, units)
    X = rng.normal(size=(len(anchors), 6))
    y = np.sin(2 * X[:, 0]) + 0.5 * X[:, 1] ** 2 + 0.1 * rng.normal(size=len(anchors))
    return anchors, X, y


def test_importance_and_forward_selection():
    anchors, X, y = _panel()
    pr = GbtParams(n_rounds=30, max_depth=3)
    ranked, imp = importance_rank(X, y, [f"x{j}" for j in range(6)], pr)
    assert set(ranked[:2]) == {"x0", "x1"}
    assert list(imp.values()) == sorted(imp.values(), reverse=True)
    splits = fold_splits(anchors, y, default_schedule(), 1)
    cache = FoldCache(X, y, splits)
    order = [int(r[1:]) for r in ranked]
    kept, traj = forward_select(cache, order, pr, min_delta=1e-4, cap=50, ids=[f"x{j}" for j in range(6)])
    assert set(kept) >= {0, 1}
    accepted = [t["cv_rmse"] for t in traj if t["accepted"]]
    assert all(b < a - 1e-4 for a, b in zip(accepted, accepted[1:]))
    assert traj[-1]["size"] == len(kept)
    kept2, _ = forward_select(cache, order, pr, cap=1)
    assert kept2 == order[:1]
    kept3, traj3 = forward_select(cache, order, pr, max_candidates=2)
    assert len(traj3) == 2


def test_report_round_trip_and_nesting():
    anchors, X, y = _panel(1)
    ids = [f"x{j}" for j in range(6)]
    sig, res = significance_filter(X, y, ids, 0.05)
    dec, dropped = correlation_prune(X[:, [ids.index(s) for s in sig]], sig)
    ranked, imp = importance_rank(X[:, [ids.index(s) for s in dec]], y, dec, GbtParams(n_rounds=5))
    rep = SelectionReport(1, 6, len(y), [r.to_dict() for r in res], sig, dec, dropped, ranked, imp, ranked[:1])
    rep.check_nested()
    back = SelectionReport.from_dict(json.loads(rep.to_json()))
    assert back.to_json() == rep.to_json()
    bad = SelectionReport(1, 6, 1, [], ["a"], ["a"], [], ["a"], {}, ["b"])
    with pytest.raises(AssertionError):
        bad.check_nested()
