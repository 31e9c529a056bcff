import json
import os
import subprocess
import sys

import pytest

import adaptive_teki
from adaptive_teki import cli, experiment
from adaptive_teki.config import OUT_DIR_ENV
from adaptive_teki.teki import NumericalError

from conftest import SMALL_LINEAR, SMALL_RATES, write_toml


@pytest.fixture
def small_toml(tmp_path):
    return write_toml(tmp_path / "small.toml", SMALL_LINEAR)


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
    assert adaptive_teki.__version__ in capsys.readouterr().out


def test_run_then_plot(small_toml, tmp_path, capsys):
    out = tmp_path / "bundle"
    assert cli.main(["run", "--config", str(small_toml), "--out", str(out), "--seed", "8"]) == 0
    assert capsys.readouterr().out.strip() == str(out)
    with open(out / "manifest.json") as fh:
        assert json.load(fh)["config"]["experiment"]["seed"] == 8
    svgs = sorted(f for f in os.listdir(out) if f.endswith(".svg"))
    assert "plot_residual.svg" in svgs and "plot_lambda.svg" in svgs
    for f in svgs:
        os.remove(out / f)
    assert cli.main(["plot", "--bundle", str(out)]) == 0
    assert len(capsys.readouterr().out.split()) == len(svgs)


def test_no_plots_flag(small_toml, tmp_path):
    out = tmp_path / "b"
    assert cli.main(["run", "--config", str(small_toml), "--out", str(out), "--no-plots"]) == 0
    assert not any(f.endswith(".svg") for f in os.listdir(out))


def test_env_var_sets_output(small_toml, tmp_path, monkeypatch):
    target = tmp_path / "from_env"
    monkeypatch.setenv(OUT_DIR_ENV, str(target))
    assert cli.main(["run", "--config", str(small_toml), "--no-plots"]) == 0
    assert (target / "manifest.json").exists()


def test_rates_command(tmp_path, capsys):
    cfg = write_toml(tmp_path / "r.toml", SMALL_RATES)
    assert cli.main(["rates", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert set(summary) == {"spread_slope", "max_bound_ratio", "residual_slope"}
    assert (tmp_path / "r" / "rates.json").exists()


def test_config_errors_exit_2(tmp_path, capsys):
    bad = write_toml(tmp_path / "bad.toml", "[experiment]\nJ = 1\n")
    assert cli.main(["run", "--config", str(bad)]) == cli.EXIT_CONFIG
    assert "experiment.J" in capsys.readouterr().err
    assert cli.main(["run", "--config", str(tmp_path / "nope.toml")]) == cli.EXIT_CONFIG
    narrow = write_toml(tmp_path / "n.toml", SMALL_RATES.replace("[0.1, 1.0]", "[0.5, 0.55]"))
    assert cli.main(["rates", "--config", str(narrow)]) == cli.EXIT_CONFIG
    good = write_toml(tmp_path / "g.toml", SMALL_LINEAR)
    assert cli.main(["run", "--config", str(good), "--workers", "0"]) == cli.EXIT_CONFIG


def test_numerical_failure_exit_3(small_toml, monkeypatch, capsys):
    def boom(*args, **kwargs):
        raise NumericalError("ensemble diverged")

    monkeypatch.setattr(experiment, "run_experiment", boom)
    assert cli.main(["run", "--config", str(small_toml)]) == cli.EXIT_NUMERICAL
    assert "diverged" in capsys.readouterr().err


def test_usage_error_and_module_entry(tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 2
    proc = subprocess.run([sys.executable, "-m", "adaptive_teki", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and adaptive_teki.__version__ in proc.stdout
