"""Monte Carlo experiment harness: path runs, CSV bundles and the rate suite."""
import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import __version__, adaptive, ensemble, metrics
from .config import ConfigError, output_dir
from .forward import DarcyModel, build_linear_operator, write_grid_csv
from .gaussian import CovOp, EigenCov, SeededRng, kl_spectrum, laplacian_cov, sample_gaussian
from .sde import InflationSchedule, SigmaSchedule, running_min_residual, simulate
from .teki import Problem, best_lambda, residual_sq, tikhonov_minimizer

log = logging.getLogger(__name__)

SCHEME_ORDER = ("vanilla", "fixed", "bilevel", "map", "two-level-lambda", "covariance")
# sub-stream keys under each path stream
_TRUTH, _DATA, _INIT, _SCHEME = 0, 1, 2, 3


@lru_cache(maxsize=8)
def _linear_model(mesh, K):
    return build_linear_operator(mesh, K)


@lru_cache(maxsize=8)
def _darcy_model(mesh, K, d, harmonic, literal_kl, source):
    return DarcyModel(d, K, mesh, source, harmonic, literal_kl)


@lru_cache(maxsize=8)
def _laplacian_prior(d, length):
    return laplacian_cov(d, 1.0, length=length)


@dataclass
class PathSetup:
    """Everything shared by the schemes on one Monte Carlo path."""

    problem: Problem
    truth: np.ndarray
    U0: np.ndarray
    u_star: np.ndarray = None
    lam_best: float = None
    lam_curve: np.ndarray = None


def build_problem(cfg):
    """Forward model, noise covariance, unscaled prior ``C0`` and truth covariance."""
    p = cfg.problem
    if cfg.is_linear:
        model = _linear_model(p.mesh, p.K)
        base = _laplacian_prior(model.dim_u, float(np.pi))
        c0 = base.scaled(p.lam_truth * p.prior_scale)
        truth_cov = c0.scaled(1.0 / p.lam_truth)
    else:
        model = _darcy_model(p.mesh, p.K, p.kl_terms, p.harmonic, p.literal_kl, p.source)
        c0 = CovOp(np.diag(kl_spectrum(p.kl_terms, p.kl_sigma, p.kl_tau, p.kl_nu)))
        truth_cov = c0.scaled(1.0 / p.lam_truth)
    gamma = CovOp.scaled_identity(model.dim_y, p.noise_std**2)
    return model, gamma, c0, truth_cov


def lambda_grid(cfg):
    r = cfg.reference
    return np.geomspace(r.lam_grid_min, r.lam_grid_max, r.lam_grid_size)


def setup_path(cfg, path):
    """Truth, data and initial ensemble of one path; identical for every scheme."""
    model, gamma, c0, truth_cov = build_problem(cfg)
    rng = SeededRng(cfg.experiment.seed, (path,))
    d, K = model.dim_u, model.dim_y
    truth = sample_gaussian(np.zeros(d), truth_cov, rng.child(_TRUTH))
    y = model.apply(truth) + sample_gaussian(np.zeros(K), gamma, rng.child(_DATA))
    U0 = sample_gaussian(np.zeros(d), c0, rng.child(_INIT), size=cfg.experiment.J)
    setup = PathSetup(Problem(model, y, gamma, c0), truth, U0)
    if cfg.is_linear:
        lam_best, curve = best_lambda(model.A, gamma, c0, y, truth, lambda_grid(cfg))
        setup.lam_best, setup.lam_curve = lam_best, curve
        setup.u_star = tikhonov_minimizer(model.A, gamma, c0, lam_best, y)
    return setup


def _active_reg(state, c0):
    if state.variant == "none":
        return None
    if state.variant == "scalar":
        return c0.scaled(1.0 / state.lam)
    if state.variant == "particles":
        return c0.scaled(1.0 / float(np.mean(state.lams)))
    return EigenCov(state.basis, state.theta)


def _initial_state(cfg, scheme, problem):
    r = cfg.regularization
    lam0 = r.lam_fixed if scheme == "fixed" else r.lam0
    if scheme == "covariance":
        lam0 = r.theta0
    rate = r.theta_rate if scheme == "covariance" else r.two_level_rate
    return adaptive.initial_state(scheme, problem, cfg.experiment.J, lam0, rate,
                                  r.lam_min, r.lam_max, r.theta_min)


def run_scheme(cfg, setup, scheme, path):
    """Iterate one scheme on a prepared path; returns ``(trace, final ensemble, state)``."""
    prob = setup.problem
    r = cfg.regularization
    e = cfg.experiment
    state = _initial_state(cfg, scheme, prob)
    step = adaptive.SCHEMES[scheme]
    kwargs = {}
    if scheme == "bilevel":
        kwargs["ctrl"] = adaptive.ArmijoControl(r.armijo_step, r.armijo_c1, r.armijo_shrink,
                                                r.armijo_floor, r.lam_min, r.lam_max)
    rng = SeededRng(e.seed, (path,)).child(_SCHEME, SCHEME_ORDER.index(scheme))
    marks = set(int(i) for i in metrics.checkpoint_iters(e.N))
    trace = metrics.MetricTrace(path)
    U = setup.U0.copy()

    def record(n):
        if setup.u_star is not None:
            ref = dict(u_star=setup.u_star, res_reg=prob.c0)
        else:
            ref = dict(u_truth=setup.truth, res_reg=prob.c0)
        row = metrics.eval_metrics(U, prob.model, prob.y, prob.gamma, _active_reg(state, prob.c0),
                                   reg_summary=state.summary(), it=n, t=n * e.h, **ref)
        trace.append(row)

    record(0)
    for n in range(e.N):
        U, state = step(state, U, prob, rng, e.h, **kwargs)
        state.record()
        if n + 1 in marks:
            record(n + 1)
    return trace, U, state


@dataclass
class PathResult:
    path: int
    traces: dict
    means: dict
    truth: np.ndarray
    lam_best: float = None
    lam_curve: np.ndarray = None


def run_path(cfg, path):
    setup = setup_path(cfg, path)
    traces, means = {}, {}
    for s in cfg.experiment.schemes:
        trace, U, _ = run_scheme(cfg, setup, s, path)
        traces[s] = trace
        means[s] = U.mean(axis=0)
    return PathResult(path, traces, means, setup.truth, setup.lam_best, setup.lam_curve)


def _run_path_star(args):
    return run_path(*args)


def run_paths(cfg, workers=1):
    """All ``Q`` paths, in path order; the worker count never changes the results."""
    jobs = [(cfg, p) for p in range(cfg.experiment.Q)]
    if workers <= 1 or len(jobs) <= 1:
        return [run_path(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_path_star, jobs))


def _fmt(v):
    """CSV cell: exact float repr, plain ints, empty for absent values."""
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "" if np.isnan(v) else repr(v)


def write_trace_csv(path, traces):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(metrics.COLUMNS)
        for tr in traces:
            for row in tr.rows:
                w.writerow([_fmt(row[c]) for c in metrics.COLUMNS])


def read_trace_csv(path):
    """Inverse of :func:`write_trace_csv`; returns one :class:`MetricTrace` per path."""
    traces = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            p = int(row["path"])
            tr = traces.setdefault(p, metrics.MetricTrace(p))
            vals = {k: (None if row[k] == "" else float(row[k])) for k in metrics.COLUMNS}
            vals["iter"] = int(row["iter"])
            tr.append(vals)
    return [traces[p] for p in sorted(traces)]


def write_aggregate_csv(path, agg):
    cols = metrics.VALUE_COLUMNS
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "t"] + [f"{c}_{k}" for c in cols for k in ("mean", "stderr")])
        for i in range(len(agg["iter"])):
            vals = [_fmt(agg[c][k][i]) for c in cols for k in (0, 1)]
            w.writerow([str(int(agg["iter"][i])), _fmt(agg["t"][i])] + vals)


def field_values(cfg, model, u):
    """Spatial field of a parameter vector (log-permeability for Darcy)."""
    if cfg.is_linear:
        return np.asarray(u)
    return model.klmap.field(u)


def run_experiment(cfg, workers=1, out=None):
    """Run every path and scheme, write the bundle and return its directory."""
    results = run_paths(cfg, workers)
    out = output_dir(cfg, out)
    os.makedirs(out, exist_ok=True)
    model = build_problem(cfg)[0]
    for s in cfg.experiment.schemes:
        traces = [r.traces[s] for r in results]
        write_trace_csv(os.path.join(out, f"metrics_{s}.csv"), traces)
        write_aggregate_csv(os.path.join(out, f"aggregate_{s}.csv"), metrics.aggregate(traces))
    x = model.grid
    first = results[0]
    write_grid_csv(os.path.join(out, "field_truth.csv"), x, field_values(cfg, model, first.truth))
    for s in cfg.experiment.schemes:
        write_grid_csv(os.path.join(out, f"field_{s}.csv"), x,
                       field_values(cfg, model, first.means[s]))
    if cfg.is_linear:
        with open(os.path.join(out, "lambda_best.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["path", "lambda_best"])
            for r in results:
                w.writerow([r.path, _fmt(r.lam_best)])
        write_grid_csv(os.path.join(out, "lambda_curve.csv"), lambda_grid(cfg), first.lam_curve,
                       header=("lambda", "error"))
    manifest = {"version": __version__, "config": cfg.to_dict(),
                "schemes": list(cfg.experiment.schemes), "paths": len(results)}
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def final_means(bundle, scheme, column="residual"):
    """Mean over paths of the last recorded value of ``column``."""
    traces = read_trace_csv(os.path.join(bundle, f"metrics_{scheme}.csv"))
    return float(np.mean([tr.column(column)[-1] for tr in traces]))


def fixed_lambda_residuals(cfg, path, iters):
    """Discrete fixed-lambda TEKI residuals against its own minimizer at iterations ``iters``.

    The residual is whitened by ``Gamma`` and ``C0 / lam_fixed``, i.e. measured
    in the geometry in which the iteration is a preconditioned gradient flow.
    """
    setup = setup_path(cfg, path)
    prob = setup.problem
    A = prob.model.A
    lam = cfg.regularization.lam_fixed
    reg = prob.c0.scaled(1.0 / lam)
    u_star = tikhonov_minimizer(A, prob.gamma, prob.c0, lam, prob.y)
    state = adaptive.RegState.scalar(lam)
    rng = SeededRng(cfg.experiment.seed, (path,)).child(_SCHEME, SCHEME_ORDER.index("fixed"))
    iters = sorted(set(int(i) for i in iters))
    out, U = [], setup.U0.copy()
    for n in range(iters[-1] + 1):
        if n in iters:
            out.append(residual_sq(U, u_star, A, prob.gamma, reg))
        if n < iters[-1]:
            U, state = adaptive.fixed_iterate(state, U, prob, rng, cfg.experiment.h)
    return np.array(out)


# ---------------------------------------------------------------------------
# rate suite


def rate_times(cfg):
    s = cfg.sde
    return np.unique(np.concatenate([np.geomspace(s.dt, s.t_end, s.checkpoints), [s.t_end]]))


def _rate_path(cfg, path, inflate):
    """One SDE path with fixed lambda; returns per-checkpoint (spread, whitened spread, residual)."""
    setup = setup_path(cfg, path)
    prob = setup.problem
    A = prob.model.A
    lam = cfg.regularization.lam_fixed
    reg = prob.c0.scaled(1.0 / lam)
    u_star = tikhonov_minimizer(A, prob.gamma, prob.c0, lam, prob.y)
    sched = SigmaSchedule.constant(prob.gamma, reg)
    infl = InflationSchedule(cfg.sde.alpha, cfg.sde.R) if inflate else InflationSchedule.off()
    rng = SeededRng(cfg.experiment.seed, (path,)).child(_SCHEME, 100 + int(inflate))
    rows = []

    def cb(t, U):
        GU = U @ A.T
        rows.append((t, ensemble.spread_sq(U),
                     metrics.whitened_spread(U, GU, prob.gamma, reg),
                     residual_sq(U, u_star, A, prob.gamma, reg)))

    simulate(setup.U0, A, prob.y, sched, infl, rng, cfg.sde.dt, cfg.sde.t_end, rate_times(cfg),
             method=cfg.sde.method, callback=cb)
    return np.array(rows)


def _rate_path_star(args):
    return _rate_path(*args)


def rate_runs(cfg, inflate, workers=1):
    """Mean over ``sde.Q`` paths of ``(t, spread, whitened_spread, residual)`` rows."""
    if not cfg.is_linear:
        raise ValueError("the rate suite needs the linear problem")
    jobs = [(cfg, p, inflate) for p in range(cfg.sde.Q)]
    if workers <= 1:
        runs = [_rate_path(*j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_rate_path_star, jobs))
    return np.mean(np.stack(runs), axis=0)


def collapse_bound(t, spread0, J):
    """``1 / (spread0^-1 + (J + 1) t / J^2)``."""
    return 1.0 / (1.0 / spread0 + (J + 1) * np.asarray(t) / J**2)


def run_rate_suite(cfg, workers=1, out=None):
    """Collapse (no inflation) and inflated-residual slope fits; writes ``rates.json``."""
    J = cfg.experiment.J
    window = tuple(cfg.sde.window)
    times = rate_times(cfg)
    inside = int(np.sum((times >= window[0]) & (times <= window[1])))
    if inside < 2:
        raise ConfigError(f"sde.window {list(window)} holds {inside} checkpoint(s); need at least 2")
    plain = rate_runs(cfg, inflate=False, workers=workers)
    t = plain[:, 0]
    spread_fit = metrics.fit_loglog(t, plain[:, 1], window)
    wfit = metrics.fit_loglog(t, plain[:, 2], window)
    bound = collapse_bound(t, plain[0, 2], J)
    ratio = plain[:, 2] / bound
    inflated = rate_runs(cfg, inflate=True, workers=workers)
    run_min = running_min_residual(inflated[:, 3])
    res_fit = metrics.fit_loglog(inflated[:, 0], run_min, window)
    report = {
        "version": __version__,
        "config": cfg.to_dict(),
        "collapse": {"spread": spread_fit.to_dict(), "whitened_spread": wfit.to_dict(),
                     "target_slope": -1.0, "max_bound_ratio": float(ratio.max()),
                     "t": t.tolist(), "mean_spread": plain[:, 1].tolist(),
                     "mean_whitened_spread": plain[:, 2].tolist(), "bound": bound.tolist()},
        "inflated": {"running_min_residual": res_fit.to_dict(),
                     "target_slope": -(1.0 - cfg.sde.alpha),
                     "t": inflated[:, 0].tolist(), "mean_residual": inflated[:, 3].tolist(),
                     "running_min": run_min.tolist()},
    }
    out = output_dir(cfg, out)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "rates.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report
