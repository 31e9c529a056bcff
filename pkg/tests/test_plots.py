import os
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from adaptive_teki.config import load
from adaptive_teki.experiment import SCHEME_ORDER, run_experiment
from adaptive_teki.plots import emit_plots, line_plot, read_plot

from conftest import SMALL_LINEAR, write_toml


def test_round_trip_linear_axes(tmp_path):
    x = np.linspace(-1.0, 3.0, 17)
    series = {"a": (x, x**2), "b & c": (x, np.sin(x))}
    data = read_plot(line_plot(tmp_path / "p.svg", series, title="t <1>"))
    assert set(data) == {"a", "b & c"}
    for k, (xs, ys) in series.items():
        assert np.allclose(data[k][0], xs, rtol=1e-9, atol=1e-9)
        assert np.allclose(data[k][1], ys, rtol=1e-9, atol=1e-9)


def test_round_trip_log_axes_drops_nonpositive(tmp_path):
    t = np.array([0.0, 1.0, 10.0, 100.0])
    v = np.array([1.0, 0.5, np.nan, 1e-3])
    data = read_plot(line_plot(tmp_path / "p.svg", {"r": (t, v)}, logx=True, logy=True))
    assert np.allclose(data["r"][0], [1.0, 100.0], rtol=1e-9)
    assert np.allclose(data["r"][1], [0.5, 1e-3], rtol=1e-9)


def test_empty_series_still_renders(tmp_path):
    path = line_plot(tmp_path / "e.svg", {"nothing": ([], [])}, logy=True)
    root = ET.parse(path).getroot()
    legend = [e.text for e in root.iter("{http://www.w3.org/2000/svg}text")
              if e.get("class") == "legend"]
    assert legend == ["nothing"]
    assert read_plot(path)["nothing"][0].size == 0
    assert read_plot(line_plot(tmp_path / "none.svg", {})) == {}


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    d = tmp_path_factory.mktemp("pb")
    cfg = load(write_toml(d / "c.toml", SMALL_LINEAR))
    return run_experiment(cfg, out=str(d / "bundle"))


def test_emit_plots_values_match_aggregates(bundle):
    written = emit_plots(bundle)
    assert {os.path.basename(p) for p in written} == {
        "plot_residual.svg", "plot_misfit.svg", "plot_loss.svg", "plot_spread.svg",
        "plot_lambda.svg", "plot_theta.svg", "plot_fields.svg"}
    data = read_plot(os.path.join(bundle, "plot_misfit.svg"))
    agg = np.genfromtxt(os.path.join(bundle, "aggregate_map.csv"), delimiter=",", names=True)
    assert np.allclose(data["map"][1], agg["misfit_mean"], rtol=1e-8)


def test_lambda_plot_has_one_line_per_scheme(bundle):
    emit_plots(bundle)
    data = read_plot(os.path.join(bundle, "plot_lambda.svg"))
    assert list(data) == list(SCHEME_ORDER)
    assert data["vanilla"][0].size == 0 and data["covariance"][0].size == 0
    assert data["bilevel"][0].size == 4
    theta = read_plot(os.path.join(bundle, "plot_theta.svg"))
    assert set(theta) == {"covariance theta_min", "covariance theta_max"}
