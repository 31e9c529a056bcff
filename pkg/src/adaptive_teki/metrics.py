"""Per-iteration diagnostics, Monte Carlo aggregation and log-log slope fits."""
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import ensemble
from .teki import residual_sq

COLUMNS = ("path", "iter", "t", "misfit", "loss", "residual", "spread",
           "whitened_spread", "lambda", "theta_min", "theta_max")
VALUE_COLUMNS = COLUMNS[3:]
DENSE_LIMIT = 1000


class MetricTrace:
    """Time-ordered metric rows of one path (dicts keyed by :data:`COLUMNS`)."""

    def __init__(self, path=0):
        self.path = path
        self.rows = []

    def append(self, row):
        row = dict(row, path=self.path)
        if self.rows and not row["t"] > self.rows[-1]["t"]:
            raise ValueError(f"time must increase: {row['t']} after {self.rows[-1]['t']}")
        for k in VALUE_COLUMNS:
            v = row.get(k)
            if v is not None and not np.isfinite(v):
                raise ValueError(f"non-finite {k} at iteration {row['iter']}")
        self.rows.append({k: row.get(k) for k in COLUMNS})

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        """Column as a float array; absent entries become NaN."""
        return np.array([np.nan if r[name] is None else r[name] for r in self.rows], dtype=np.float64)

    @property
    def spread0(self):
        """Initial whitened spread (the constant of the collapse bound)."""
        return self.rows[0]["whitened_spread"]


def whitened_spread(U, GU, gamma, reg=None):
    """``(1/J) sum |Gamma^-1/2 (G(u_j) - G_bar)|^2 + |reg^-1/2 (u_j - u_bar)|^2``."""
    val = gamma.norm_sq(ensemble.anomalies(GU))
    if reg is not None:
        val = val + reg.norm_sq(ensemble.anomalies(U))
    return float(np.mean(val))


def eval_metrics(U, model, y, gamma, reg=None, u_star=None, res_reg=None, u_truth=None,
                 reg_summary=(None, None, None), GU=None, it=0, t=0.0):
    """One metric row for the ensemble ``U``.

    Parameters
    ----------
    reg : covariance or None
        Active regularization covariance. It enters the loss and the
        whitened spread; ``None`` (vanilla EKI) leaves only the data terms.
    u_star, res_reg : array, covariance
        Linear case: residual against ``u_star`` whitened by ``Gamma`` and
        ``res_reg`` (a forward model with a matrix ``A`` is required).
    u_truth : array
        Used instead when ``u_star`` is absent: mean ``|res_reg^-1/2 (u_j - u_truth)|^2``.
    reg_summary : tuple
        ``(lambda, theta_min, theta_max)`` with ``None`` for absent entries.
    """
    U = np.atleast_2d(U)
    if GU is None:
        GU = model.apply_batch(U)
    r = GU - y
    misfit = float(np.mean(np.sum(r * r, axis=1)))
    data_term = 0.5 * gamma.norm_sq(r)
    loss = data_term if reg is None else data_term + 0.5 * reg.norm_sq(U)
    residual = None
    if u_star is not None:
        residual = residual_sq(U, u_star, model.A, gamma, res_reg)
    elif u_truth is not None:
        residual = float(np.mean(res_reg.norm_sq(U - u_truth)))
    lam, th_min, th_max = reg_summary
    return {"iter": it, "t": t, "misfit": misfit, "loss": float(np.mean(loss)),
            "residual": residual, "spread": float(ensemble.spread_sq(U)),
            "whitened_spread": whitened_spread(U, GU, gamma, reg),
            "lambda": lam, "theta_min": th_min, "theta_max": th_max}


def checkpoint_iters(N, dense_limit=DENSE_LIMIT, n_geom=200):
    """Iterations to record: all of ``0..N`` up to ``dense_limit``, else geometric thinning."""
    if N <= dense_limit:
        return np.arange(N + 1)
    g = np.unique(np.rint(np.geomspace(1, N, n_geom)).astype(int))
    return np.concatenate([[0], g])


def aggregate(traces, columns=VALUE_COLUMNS):
    """Pointwise mean and standard error over paths.

    Returns a dict with ``iter`` and ``t`` arrays and ``(mean, stderr)`` per
    column. Absent values propagate as NaN.
    """
    traces = list(traces)
    if not traces:
        raise ValueError("no traces to aggregate")
    it0, t0 = traces[0].column("iter"), traces[0].column("t")
    for tr in traces[1:]:
        if tr.column("iter").shape != it0.shape or np.any(tr.column("iter") != it0) \
                or np.any(tr.column("t") != t0):
            raise ValueError(f"trace of path {tr.path} is not aligned with path {traces[0].path}")
    out = {"iter": it0.astype(int), "t": t0}
    Q = len(traces)
    for c in columns:
        vals = np.vstack([tr.column(c) for tr in traces])
        mean = vals.mean(axis=0)
        se = vals.std(axis=0, ddof=1) / np.sqrt(Q) if Q > 1 else np.zeros_like(mean)
        out[c] = (mean, se)
    return out


@dataclass
class SlopeFit:
    window: tuple
    slope: float
    intercept: float
    r2: float
    n_points: int

    def to_dict(self):
        return {"window": list(self.window), "slope": self.slope, "intercept": self.intercept,
                "r2": self.r2, "n_points": self.n_points}


def fit_loglog(t, values, window=None):
    """Least-squares line through ``(log t, log value)`` for ``t`` in ``window``.

    Raises ``ValueError`` for fewer than two points in the window or a
    nonpositive value (naming its index in the input series).
    """
    t = np.asarray(t, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if window is None:
        window = (t.min(), t.max())
    t0, t1 = window
    idx = np.flatnonzero((t >= t0) & (t <= t1))
    if idx.size < 2:
        raise ValueError(f"window [{t0}, {t1}] holds {idx.size} checkpoint(s); need at least 2")
    bad = idx[~(values[idx] > 0) | ~(t[idx] > 0)]
    if bad.size:
        raise ValueError(f"log-log fit needs positive data; index {bad[0]} has t={t[bad[0]]}, "
                         f"value={values[bad[0]]}")
    lx, ly = np.log(t[idx]), np.log(values[idx])
    if np.ptp(ly) == 0.0:
        return SlopeFit((float(t0), float(t1)), 0.0, float(ly[0]), 1.0, int(idx.size))
    res = stats.linregress(lx, ly)
    return SlopeFit((float(t0), float(t1)), float(res.slope), float(res.intercept),
                    float(res.rvalue**2), int(idx.size))
