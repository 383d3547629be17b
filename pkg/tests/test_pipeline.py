import csv
import dataclasses
import json

import numpy as np
import pytest

from choleracast.config import RunConfig
from choleracast.cv import default_schedule
from choleracast.pipeline import (STAGES, anchor_calendar, cumulative_curve, read_forecasts, run_pipeline,
                                  selection_rows)


def small_config(sim_inputs, out, **kw):
    base = dict(inputs={k: str(v) for k, v in sim_inputs.items()}, out_dir=str(out), horizons=(1, 2), n_trials=3, tune_max_features=12,
                forward_max_candidates=6, q_cut=0.01)
    base.update(kw)
    return RunConfig(**base)


@pytest.fixture(scope="module")
def small_run(sim_inputs, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    return run_pipeline(small_config(sim_inputs, out))


def test_artifacts(small_run):
    out = small_run.out_dir
    for name in ("schedule.json", "metrics.json", "forecasts.csv", "h1/selection_report.json", "h1/trials.json",
                 "h1/features.txt", "h2/gbtree.json", "h2/baseline.json"):
        assert (out / name).is_file(), name
    doc = json.loads((out / "metrics.json").read_text())
    assert {(m["horizon"], m["model"]) for m in doc["metrics"]} == {(h, m) for h in (1, 2)
                                                                    for m in ("gbtree", "baseline")}
    assert all(np.isfinite(m["cv_rmse"]) and np.isfinite(m["holdout_rmse"]) for m in doc["metrics"])
    recs = read_forecasts(out / "forecasts.csv")
    assert {r["split"] for r in recs} <= {"train", "cv", "holdout", "future"}
    assert any(r["split"] == "future" and r["y_true"] is None for r in recs)
    plots = sorted((out / "plot_data").glob("*.csv"))
    assert len(plots) == 6 * 2
    with plots[0].open() as fh:
        assert next(csv.reader(fh)) == ["date", "y_true", "y_pred", "split"]
    for h, sel in small_run.selections.items():
        sel.report.check_nested()
        assert 1 <= len(sel.final) <= 50


def test_selection_never_sees_holdout(small_run):
    fm, sched = small_run.features, small_run.prepared.schedule
    for h in (1, 2):
        fit, cv = selection_rows(fm, h, sched, "label")
        assert (fm.anchor[cv] < np.datetime64(sched.holdout_start)).all()
        assert set(fit) <= set(cv)


def test_holdout_poisoning_leaves_selection_unchanged(sim_inputs, tmp_path, small_run):
    """Scramble holdout-era features and targets; every selection artifact must be identical."""
    start = np.datetime64(small_run.prepared.schedule.holdout_start, "D")

    def poison(fm):
        rows = fm.anchor >= start
        rng = np.random.default_rng(0)
        fm.values[rows] = rng.normal(size=fm.values[rows].shape) * 1e3
        fm.targets[rows] = rng.normal(size=fm.targets[rows].shape) * 1e3
        return fm

    cfg = small_config(sim_inputs, tmp_path, plot_data=False)
    run_pipeline(cfg, stop_after="forward", feature_hook=poison)
    for h in (1, 2):
        for name in ("selection_report.json", "trials.json", "features.txt"):
            assert (tmp_path / f"h{h}" / name).read_bytes() == (small_run.out_dir / f"h{h}" / name).read_bytes()


def test_stop_after_and_leakage_modes(sim_inputs, tmp_path):
    res = run_pipeline(small_config(sim_inputs, tmp_path / "a", horizons=(1,)), stop_after="tune")
    assert res.metrics is None and (tmp_path / "a" / "h1" / "trials.json").is_file()
    assert not res.selections[1].report.final
    res = run_pipeline(small_config(sim_inputs, tmp_path / "b", horizons=(1,), leakage="anchor", n_trials=0),
                       stop_after="evaluate")
    assert res.metrics is not None
    with pytest.raises(ValueError):
        run_pipeline(small_config(sim_inputs, tmp_path / "c"), stop_after="nope")
    assert STAGES[0] == "prepare" and STAGES[-1] == "plot-data"


def test_anchor_calendar():
    import datetime as dt
    d = dt.date
    cal = anchor_calendar(d(2017, 7, 1), d(2017, 7, 20), 3, d(2017, 6, 30))
    assert cal[0] == d(2017, 7, 3) and all((b - a).days == 3 for a, b in zip(cal, cal[1:-1]))
    assert cal[-1] == d(2017, 7, 20)


def test_cumulative_curve():
    assert cumulative_curve([1, 2, 3], 10).tolist() == [11, 13, 16]


def test_config_round_trip(tmp_path, sim_inputs):
    cfg = small_config(sim_inputs, tmp_path, gbt={"max_depth": 3})
    cfg.save(tmp_path / "c.json")
    back = RunConfig.load(tmp_path / "c.json")
    assert back.to_dict() == cfg.to_dict()
    assert "max_depth" not in back.search_space()
    with pytest.raises(ValueError):
        RunConfig.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        dataclasses.replace(cfg, leakage="future").validate()
    rel = {"inputs": {"cholera": "x/cholera.csv"}}
    (tmp_path / "r.json").write_text(json.dumps(rel))
    assert RunConfig.load(tmp_path / "r.json").inputs["cholera"] == str(tmp_path.resolve() / "x/cholera.csv")
