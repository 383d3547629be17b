import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from choleracast.baseline import fit_ols
from choleracast.cv import (FoldSchedule, cv_rmse, default_schedule, evaluate, fold_splits, holdout_split, rmse,
                            split_samples)
from choleracast.errors import EmptyFold, EmptyInput
from helpers import daily_anchors, lookahead_violations, random_schedule

D = dt.date


def test_rmse_fixtures():
    assert cv_rmse([1, 4, 9, 16, 25]) == pytest.approx(math.sqrt(11), abs=1e-12)
    assert rmse([0, 0], [3, 4]) == pytest.approx(math.sqrt(12.5), abs=1e-12)
    assert rmse([1.5, 2], [1.5, 2]) == 0.0
    with pytest.raises(EmptyInput):
        cv_rmse([])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=10), st.randoms())
def test_cv_rmse_order_invariant(mses, rnd):
    perm = mses[:]
    rnd.shuffle(perm)
    assert cv_rmse(perm) == cv_rmse(mses)


def test_default_schedule():
    s = default_schedule(D(2018, 2, 18))
    assert s.folds[0] == (D(2017, 8, 16), D(2017, 8, 31))
    assert (s.base_start, s.base_end) == (D(2017, 7, 1), D(2017, 8, 15))
    assert s.holdout_end[4] == D(2017, 12, 24)
    assert s.folds[-1][1] < s.holdout_start == D(2017, 11, 11)
    assert FoldSchedule.from_dict(s.to_dict()) == s


def test_schedule_invariants_rejected():
    with pytest.raises(ValueError):
        FoldSchedule(D(2017, 7, 1), D(2017, 8, 1), ((D(2017, 9, 1), D(2017, 8, 20)),), D(2017, 10, 1))
    with pytest.raises(ValueError):
        FoldSchedule(D(2017, 7, 1), D(2017, 8, 1), ((D(2017, 8, 10), D(2017, 8, 20)),
                                                    (D(2017, 8, 15), D(2017, 8, 30))), D(2017, 10, 1))
    with pytest.raises(ValueError):
        FoldSchedule(D(2017, 7, 1), D(2017, 8, 1), ((D(2017, 8, 10), D(2017, 8, 20)),), D(2017, 8, 20))


def test_split_growth_and_boundary():
    s = default_schedule()
    anchors = daily_anchors("2017-07-01", 160)
    y = np.zeros(len(anchors))
    tr1, va1 = split_samples(anchors, y, s, 0, 1, "anchor")
    tr3, _ = split_samples(anchors, y, s, 2, 1, "anchor")
    assert set(va1) | set(tr1) <= set(tr3)
    # an anchor on the validation start date is validation only
    on_start = np.flatnonzero(anchors == np.datetime64("2017-08-16"))
    assert set(on_start) <= set(va1) and not set(on_start) & set(tr1)
    tr_l, _ = split_samples(anchors, y, s, 0, 2, "label")
    assert anchors[tr_l].max() == np.datetime64("2017-08-16") - 29


def test_nan_targets_skipped_and_empty_folds():
    s = default_schedule()
    anchors = daily_anchors("2017-07-01", 160, 1)
    y = np.zeros(len(anchors))
    y[anchors >= np.datetime64("2017-09-15")] = np.nan
    splits = fold_splits(anchors, y, s, 1)
    assert [i for i, _, _ in splits] == [0, 1]
    for i in (2, 3):
        with pytest.raises(EmptyFold):
            split_samples(anchors, y, s, i, 1)
    tr, ho = holdout_split(anchors, y, s, 1)
    assert len(ho) == 0 and np.isfinite(y[tr]).all()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2, 3, 4]), st.sampled_from(["anchor", "label"]))
def test_no_lookahead_random_schedules(seed, horizon, leakage):
    rng = np.random.default_rng(seed)
    s = random_schedule(rng)
    anchors = daily_anchors("2017-06-20", 260)
    try:
        bad = lookahead_violations(anchors, s, horizon, leakage, split_samples, fold_splits)
    except EmptyFold:
        return
    assert bad == []


class _Oracle:
    def __init__(self, lookup):
        self.lookup = lookup

    def predict(self, X):
        return np.array([self.lookup[x] for x in X[:, 0]])


def test_evaluate_perfect_oracle_and_constant_mean():
    s = default_schedule(D(2018, 2, 18))
    anchors = daily_anchors("2017-07-01", 200, 4)
    rng = np.random.default_rng(0)
    y = rng.normal(10, 3, size=len(anchors))
    X = np.arange(len(y), dtype=float)[:, None]
    truth = dict(zip(X[:, 0], y))
    ev = evaluate(lambda Xt, yt: _Oracle(truth), X, y, anchors, s, 1)
    assert ev.metrics.cv_rmse == 0.0 and ev.metrics.holdout_rmse == 0.0
    assert ev.metrics.n_holdout == 4 * ((anchors.max() - np.datetime64("2017-11-11")).astype(int) + 1)

    class Mean:
        def __init__(self, yt):
            self.m = yt.mean()

        def predict(self, X):
            return np.full(len(X), self.m)

    ev = evaluate(lambda Xt, yt: Mean(yt), X, y, anchors, s, 1, governorate=np.tile(list("abcd"), 200))
    assert ev.metrics.holdout_rmse == pytest.approx(3.0, rel=0.05)
    assert ev.metrics.cv_rmse == pytest.approx(3.0, rel=0.05)
    assert sorted(ev.metrics.governorate_residuals) == list("abcd")
    assert set(ev.metrics.to_dict()) >= {"horizon", "model", "cv_rmse", "holdout_rmse", "fold_mses", "n_train",
                                         "n_holdout"}


def test_gbtree_beats_linear_on_nonlinear_panel():
    from choleracast import gbtree
    from choleracast.gbtree import GbtParams

    s = default_schedule(D(2018, 2, 18))
    anchors = daily_anchors("2017-07-01", 200, 4)
    rng = np.random.default_rng(1)
    X = rng.uniform(-2, 2, size=(len(anchors), 3))
    y = 4 * (X[:, 0] > 0.5) * np.abs(X[:, 1]) + rng.normal(0, 0.3, size=len(anchors))
    pr = GbtParams(n_rounds=60, max_depth=3)
    g = evaluate(lambda a, b: gbtree.fit(a, b, pr), X, y, anchors, s, 1)
    b = evaluate(fit_ols, X, y, anchors, s, 1)
    assert g.metrics.holdout_rmse < b.metrics.holdout_rmse
