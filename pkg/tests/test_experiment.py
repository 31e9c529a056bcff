import json
import os

import numpy as np
import pytest

from adaptive_teki import metrics
from adaptive_teki.config import ConfigError, from_dict, load
from adaptive_teki.experiment import (SCHEME_ORDER, collapse_bound, final_means,
                                      fixed_lambda_residuals, rate_times, read_trace_csv,
                                      run_experiment, run_rate_suite, setup_path)

from conftest import SMALL_LINEAR, SMALL_RATES, write_toml


@pytest.fixture(scope="module")
def small_cfg(tmp_path_factory):
    return load(write_toml(tmp_path_factory.mktemp("cfg") / "small.toml", SMALL_LINEAR))


@pytest.fixture(scope="module")
def bundle(small_cfg, tmp_path_factory):
    return run_experiment(small_cfg, out=str(tmp_path_factory.mktemp("bundle")))


def _files(d):
    return {f: open(os.path.join(d, f), "rb").read() for f in sorted(os.listdir(d))}


def test_bundle_contents(bundle):
    names = set(os.listdir(bundle))
    for s in SCHEME_ORDER:
        assert {f"metrics_{s}.csv", f"aggregate_{s}.csv", f"field_{s}.csv"} <= names
    assert {"field_truth.csv", "lambda_best.csv", "lambda_curve.csv", "manifest.json"} <= names
    with open(os.path.join(bundle, "metrics_fixed.csv")) as fh:
        assert fh.readline().strip().split(",") == list(metrics.COLUMNS)
    with open(os.path.join(bundle, "manifest.json")) as fh:
        man = json.load(fh)
    assert man["paths"] == 2 and man["schemes"] == list(SCHEME_ORDER)


def test_trace_round_trip(bundle):
    traces = read_trace_csv(os.path.join(bundle, "metrics_bilevel.csv"))
    assert [tr.path for tr in traces] == [0, 1]
    assert [r["iter"] for r in traces[0].rows] == [0, 1, 2, 3]
    lam = traces[0].column("lambda")
    assert np.all(np.isfinite(lam)) and np.all(lam > 0)
    assert np.all(np.isnan(read_trace_csv(os.path.join(bundle, "metrics_vanilla.csv"))[0]
                           .column("lambda")))
    assert np.isfinite(final_means(bundle, "fixed"))


def test_same_seed_is_byte_identical(small_cfg, bundle, tmp_path):
    again = run_experiment(small_cfg, out=str(tmp_path / "again"))
    assert _files(again) == _files(bundle)


def test_different_seed_changes_output(small_cfg, bundle, tmp_path):
    other = run_experiment(small_cfg.replace(experiment={"seed": 4}), out=str(tmp_path / "o"))
    assert _files(other)["metrics_fixed.csv"] != _files(bundle)["metrics_fixed.csv"]


def test_worker_count_does_not_change_output(small_cfg, bundle, tmp_path):
    par = run_experiment(small_cfg, workers=2, out=str(tmp_path / "par"))
    assert _files(par) == _files(bundle)


def test_zero_iterations_gives_initial_rows(small_cfg, tmp_path):
    cfg = small_cfg.replace(experiment={"Q": 1, "N": 0})
    out = run_experiment(cfg, out=str(tmp_path / "zero"))
    for s in SCHEME_ORDER:
        traces = read_trace_csv(os.path.join(out, f"metrics_{s}.csv"))
        assert len(traces) == 1 and [r["iter"] for r in traces[0].rows] == [0]
    # every scheme starts from the same initial ensemble
    first = {s: read_trace_csv(os.path.join(out, f"metrics_{s}.csv"))[0].rows[0]["spread"]
             for s in SCHEME_ORDER}
    assert len(set(first.values())) == 1


def test_darcy_bundle(tmp_path):
    cfg = from_dict({"experiment": {"problem": "darcy", "Q": 1, "N": 2, "J": 5,
                                    "schemes": ["fixed", "covariance"]},
                     "problem": {"mesh": 1 / 16, "K": 4, "kl_terms": 4}})
    out = run_experiment(cfg, out=str(tmp_path / "darcy"))
    assert "lambda_best.csv" not in os.listdir(out)
    tr = read_trace_csv(os.path.join(out, "metrics_covariance.csv"))[0]
    assert np.all(tr.column("theta_min") > 0)


def test_setup_is_shared_across_schemes(small_cfg):
    a, b = setup_path(small_cfg, 0), setup_path(small_cfg, 0)
    assert np.array_equal(a.U0, b.U0) and np.array_equal(a.truth, b.truth)
    assert not np.array_equal(a.U0, setup_path(small_cfg, 1).U0)


def test_fixed_lambda_residuals_decrease(small_cfg):
    r = fixed_lambda_residuals(small_cfg, 0, [0, 5, 1, 20])
    assert r.shape == (4,)
    assert np.all(np.diff(r) < 0)


@pytest.fixture(scope="module")
def rates_cfg(tmp_path_factory):
    return load(write_toml(tmp_path_factory.mktemp("rcfg") / "r.toml", SMALL_RATES))


def test_rate_suite_report(rates_cfg, tmp_path):
    rep = run_rate_suite(rates_cfg, out=str(tmp_path))
    assert os.path.exists(tmp_path / "rates.json")
    col = rep["collapse"]
    assert col["spread"]["slope"] < 0 and col["target_slope"] == -1.0
    assert rep["inflated"]["target_slope"] == -0.5
    rm = np.array(rep["inflated"]["running_min"])
    assert np.all(np.diff(rm) <= 0)
    assert col["t"][0] == 0.0 and col["t"][-1] == 1.0


def test_rate_times_and_bound(rates_cfg):
    t = rate_times(rates_cfg)
    assert t[0] == 0.01 and t[-1] == 1.0 and np.all(np.diff(t) > 0)
    assert collapse_bound(0.0, 2.0, 10) == 2.0
    assert np.isclose(collapse_bound(100.0, np.inf, 10), 100 / 1100)


def test_rate_window_too_narrow(rates_cfg):
    cfg = rates_cfg.replace(sde={"window": [0.5, 0.55]})
    with pytest.raises(ConfigError, match="checkpoint"):
        run_rate_suite(cfg)
