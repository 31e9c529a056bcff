import numpy as np
import pytest

from adaptive_teki import metrics
from adaptive_teki.forward import LinearModel
from adaptive_teki.gaussian import CovOp
from adaptive_teki.metrics import MetricTrace, aggregate, eval_metrics, fit_loglog
from adaptive_teki.teki import residual_sq

from conftest import random_spd


def _setup(rng, d=4, K=3):
    A = rng.standard_normal((K, d))
    return (LinearModel(A), rng.standard_normal(K), CovOp(random_spd(rng, K)),
            CovOp(random_spd(rng, d)))


def _row(it, t, **kw):
    base = {k: 1.0 for k in metrics.VALUE_COLUMNS}
    base.update(iter=it, t=t)
    base.update(kw)
    return base


def test_trace_validation():
    tr = MetricTrace(3)
    tr.append(_row(0, 0.0))
    tr.append(_row(1, 1.0, residual=None))
    assert len(tr) == 2 and tr.rows[0]["path"] == 3
    assert np.isnan(tr.column("residual")[1])
    with pytest.raises(ValueError, match="increase"):
        tr.append(_row(2, 1.0))
    with pytest.raises(ValueError, match="non-finite misfit"):
        tr.append(_row(2, 2.0, misfit=np.inf))
    assert tr.spread0 == 1.0


def test_metrics_at_minimizer(rng):
    model, y, gamma, c0 = _setup(rng)
    u_star = rng.standard_normal(4)
    U = np.tile(u_star, (5, 1))
    row = eval_metrics(U, model, y, gamma, c0, u_star=u_star, res_reg=c0)
    assert row["residual"] == 0.0 and row["spread"] == 0.0


def test_zero_ensemble_misfit(rng):
    model, y, gamma, c0 = _setup(rng)
    row = eval_metrics(np.zeros((5, 4)), model, y, gamma)
    assert np.isclose(row["misfit"], y @ y)
    assert row["residual"] is None and row["lambda"] is None


def test_metrics_recomputation_oracle(rng):
    model, y, gamma, c0 = _setup(rng)
    reg = c0.scaled(0.5)
    U = rng.standard_normal((6, 4))
    u_star = rng.standard_normal(4)
    row = eval_metrics(U, model, y, gamma, reg, u_star=u_star, res_reg=reg,
                       reg_summary=(2.0, None, None), it=7, t=3.5)
    A = model.A
    gi, ri = np.linalg.inv(gamma.matrix), np.linalg.inv(reg.matrix)
    mis = np.mean([(A @ u - y) @ (A @ u - y) for u in U])
    loss = np.mean([0.5 * (y - A @ u) @ gi @ (y - A @ u) + 0.5 * u @ ri @ u for u in U])
    res = np.mean([(A @ (u - u_star)) @ gi @ (A @ (u - u_star)) + (u - u_star) @ ri @ (u - u_star)
                   for u in U])
    E = U - U.mean(0)
    GE = E @ A.T
    wsp = np.mean([g @ gi @ g + e @ ri @ e for g, e in zip(GE, E)])
    assert np.isclose(row["misfit"], mis, rtol=1e-12)
    assert np.isclose(row["loss"], loss, rtol=1e-12)
    assert np.isclose(row["residual"], res, rtol=1e-12)
    assert np.isclose(row["spread"], np.mean(np.sum(E**2, 1)), rtol=1e-12)
    assert np.isclose(row["whitened_spread"], wsp, rtol=1e-12)
    assert (row["iter"], row["t"], row["lambda"]) == (7, 3.5, 2.0)
    assert row["residual"] == residual_sq(U, u_star, A, gamma, reg)
    assert eval_metrics(U, model, y, gamma, reg, u_star=u_star, res_reg=reg) == \
        eval_metrics(U, model, y, gamma, reg, u_star=u_star, res_reg=reg)


def test_truth_distance_residual(rng):
    model, y, gamma, c0 = _setup(rng)
    U = rng.standard_normal((5, 4))
    truth = rng.standard_normal(4)
    row = eval_metrics(U, model, y, gamma, None, u_truth=truth, res_reg=c0)
    assert np.isclose(row["residual"], np.mean(c0.norm_sq(U - truth)))


def test_checkpoint_iters():
    assert np.array_equal(metrics.checkpoint_iters(5), np.arange(6))
    thin = metrics.checkpoint_iters(100_000)
    assert thin[0] == 0 and thin[-1] == 100_000 and thin.size <= 201
    assert np.all(np.diff(thin) > 0)


def _trace(path, vals, t=None):
    tr = MetricTrace(path)
    t = np.arange(len(vals), dtype=float) if t is None else t
    for i, v in enumerate(vals):
        tr.append(_row(i, float(t[i]), residual=float(v)))
    return tr


def test_aggregate_examples(rng):
    one = aggregate([_trace(0, [3.0, 2.0])])
    assert np.array_equal(one["residual"][0], [3.0, 2.0])
    assert np.array_equal(one["residual"][1], [0.0, 0.0])
    traces = [_trace(p, rng.uniform(size=4)) for p in range(5)]
    a = aggregate(traces)
    b = aggregate(traces[::-1])
    assert np.allclose(a["residual"][0], b["residual"][0])
    assert np.allclose(a["residual"][1], b["residual"][1])
    c = aggregate([_trace(p, [2.5] * 3) for p in range(4)])
    assert np.array_equal(c["residual"][0], [2.5] * 3)
    with pytest.raises(ValueError, match="aligned"):
        aggregate([_trace(0, [1.0, 2.0]), _trace(1, [1.0, 2.0], t=[0.0, 2.0])])
    with pytest.raises(ValueError):
        aggregate([])


def test_aggregate_stderr_shrinks():
    rng = np.random.default_rng(0)
    se = []
    for Q in (10, 100, 1000):
        traces = [_trace(p, rng.normal(5.0, 1.0, 2)) for p in range(Q)]
        se.append(aggregate(traces, columns=("residual",))["residual"][1].mean())
    assert se[0] > se[1] > se[2]
    assert np.allclose(se, 1 / np.sqrt([10, 100, 1000]), rtol=0.35)


def test_fit_exact_power_law():
    t = np.geomspace(1, 100, 30)
    f = fit_loglog(t, 3.0 / t)
    assert abs(f.slope + 1.0) < 1e-10 and np.isclose(f.r2, 1.0)
    assert fit_loglog(t, np.full(30, 2.0)).slope == 0.0
    d = f.to_dict()
    assert d["n_points"] == 30 and d["window"] == [1.0, 100.0]


def test_fit_noisy_half_power():
    rng = np.random.default_rng(4)
    t = np.geomspace(10, 100, 40)
    v = 2.0 * t**-0.5 * (1 + 0.01 * rng.standard_normal(40))
    assert abs(fit_loglog(t, v, (10, 100)).slope + 0.5) <= 0.05


def test_fit_errors():
    t = np.array([1.0, 2.0, 3.0, 4.0])
    with pytest.raises(ValueError, match="index 2"):
        fit_loglog(t, np.array([1.0, 2.0, 0.0, 4.0]))
    with pytest.raises(ValueError, match="need at least 2"):
        fit_loglog(t, np.ones(4), (2.5, 3.5))
