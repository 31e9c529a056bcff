"""Continuous-time TEKI dynamics for linear forward maps.

The drift is the preconditioned negative gradient of the Tikhonov functional,
``(C(u) + f(t) B) (A^T Gamma^-1 (y - A u) - C_t^-1 u)``, with the additive
inflation factor ``f(t) = 1 / (t^alpha + R)``. Besides explicit Euler-Maruyama
a linearly drift-implicit variant is provided: the elliptic benchmark has a
Hessian whose largest eigenvalue exceeds 1e6, so explicit steps of useful size
blow up.
"""
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as la

from . import ensemble
from .gaussian import CovOp
from .teki import NumericalError


@dataclass
class InflationSchedule:
    """Additive variance inflation ``f(t) B`` with ``f(t) = 1 / (t^alpha + R)``."""

    alpha: float = 0.5
    R: float = 1.0
    B: np.ndarray = None
    enabled: bool = True

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.R <= 0:
            raise ValueError(f"R must be positive, got {self.R}")

    @classmethod
    def off(cls):
        return cls(enabled=False)

    def factor(self, t):
        if not self.enabled:
            return 0.0
        return 1.0 / (t**self.alpha + self.R)

    def matrix(self, d):
        return np.eye(d) if self.B is None else np.asarray(self.B, dtype=np.float64)


@dataclass
class SigmaSchedule:
    """Time-dependent noise covariance ``Gamma_t`` and regularization covariance ``C_t``."""

    gamma: Callable[[float], CovOp]
    reg: Callable[[float], CovOp]
    is_constant: bool = False
    _cache: list = field(default_factory=list, repr=False, compare=False)

    @classmethod
    def constant(cls, gamma, reg):
        return cls(lambda t: gamma, lambda t: reg, is_constant=True)

    def normal_terms(self, t, A, y):
        """``(A^T Gamma_t^-1 y, A^T Gamma_t^-1 A + C_t^-1)``, cached for constant schedules."""
        if self.is_constant and self._cache:
            A0, y0, b, H = self._cache
            if A0 is A and y0 is y:
                return b, H
        gamma_t = self.gamma(t)
        b = A.T @ gamma_t.solve(y)
        H = A.T @ gamma_t.solve(A) + self.reg(t).inv()
        if self.is_constant:
            self._cache[:] = [A, y, b, H]
        return b, H

    def sigma_inv(self, t):
        """Block-diagonal ``Sigma_t^{-1}``."""
        return la.block_diag(self.gamma(t).inv(), self.reg(t).inv())

    def psi(self, t, dt=None):
        """``d/dt Sigma_t^{-1}`` by central differences, step ``1e-4 (1 + t)`` by default."""
        if dt is None:
            dt = 1e-4 * (1.0 + t)
        return (self.sigma_inv(t + dt) - self.sigma_inv(t - dt)) / (2.0 * dt)


def _inv_sqrt_T(cov, xi):
    """Rows of ``S xi`` with ``S S^T = cov^{-1}`` (``S = L^{-T}`` for ``cov = L L^T``)."""
    if hasattr(cov, "chol"):
        return la.solve_triangular(cov.chol.T, xi.T, lower=False).T
    return (xi * np.sqrt(cov.theta)) @ cov.basis.T


def em_step(U, t, dt, A, y, sched, infl, rng=None, xi=None, method="explicit"):
    """One Euler-Maruyama step of the (inflated) TEKI SDE for all particles.

    Parameters
    ----------
    U : (J, d) array
    t, dt : float
        Current time and step.
    A : (K, d) array
    y : (K,) array
    sched : SigmaSchedule
        Evaluated at ``t``.
    infl : InflationSchedule
    rng : SeededRng, optional
        Source of the ``(J, K + d)`` standard normals; ignored if ``xi`` is given.
    method : {"explicit", "implicit"}
        ``"implicit"`` treats the drift's linear dependence on the particle
        implicitly with the preconditioner frozen at ``t``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    U = np.asarray(U, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    J, d = U.shape
    K = A.shape[0]
    gamma_t, reg_t = sched.gamma(t), sched.reg(t)
    C = ensemble.cov_param(U)
    P = C + infl.factor(t) * infl.matrix(d)
    b, H = sched.normal_terms(t, A, y)
    grad = b[None, :] - U @ H  # H symmetric
    if xi is None:
        xi = rng.standard_normal((J, K + d))
    w = _inv_sqrt_T(gamma_t, xi[:, :K]) @ A + _inv_sqrt_T(reg_t, xi[:, K:])
    noise = np.sqrt(dt) * (w @ C)  # C symmetric
    inc = dt * (grad @ P.T) + noise
    if method == "explicit":
        return U + inc
    if method == "implicit":
        M = np.eye(d) + dt * (P @ H)
        return U + np.linalg.solve(M, inc.T).T
    raise ValueError(f"unknown method {method!r}")


def simulate(U0, A, y, sched, infl, rng, dt, t_end, checkpoints, method="implicit", callback=None):
    """Integrate on ``[0, t_end]`` with fixed ``dt``, reporting at ``checkpoints``.

    ``callback(t, U)`` is called at ``t = 0`` and whenever the step count
    reaches the rounded checkpoint; without a callback the ensembles are
    returned as a list of ``(t, U)`` pairs.
    """
    n_steps = int(round(t_end / dt))
    marks = sorted({int(round(c / dt)) for c in checkpoints if 0 < c <= t_end + 1e-12})
    out = []
    report = callback or (lambda t, U: out.append((t, U.copy())))
    U = np.array(U0, dtype=np.float64)
    report(0.0, U)
    mi = 0
    for n in range(n_steps):
        t = n * dt
        with np.errstate(over="ignore", invalid="ignore"):
            U = em_step(U, t, dt, A, y, sched, infl, rng, method=method)
        if not np.all(np.isfinite(U)):
            raise NumericalError(f"SDE integration diverged at t = {t + dt:g}")
        while mi < len(marks) and marks[mi] == n + 1:
            report((n + 1) * dt, U)
            mi += 1
    return out


@dataclass
class AssumptionReport:
    """Outcome of :func:`assumption_probe`.

    ``bound_violation`` is the largest excess of ``|Psi_t|`` (measured in
    ``Sigma_t^{-1}`` units) over ``1 / (t^beta + R)``, attained at ``worst_t``.
    ``max_R`` is the largest offset for which the two-sided bound holds on the grid.
    """

    sigma_min: float
    kappa1: float
    sigma_violation: float
    bound_violation: float
    worst_t: float
    max_R: float
    holds: bool


def assumption_probe(sched, t_grid, beta, R=1.0, dt=None):
    """Check the learning-process assumption for a schedule on a time grid.

    The conditions probed are ``Sigma_t^{-1} >= sigma_min I`` with
    ``sigma_min > 0``, the two-sided bound
    ``-(t^beta + R)^{-1} Sigma_t^{-1} <= Psi_t <= (t^beta + R)^{-1} Sigma_t^{-1}``
    and finiteness of ``kappa1 = int |Psi_t| dt`` (trapezoid rule on the grid).
    """
    if beta <= 1:
        raise ValueError("beta must exceed 1")
    t_grid = np.asarray(t_grid, dtype=np.float64)
    s_min, norms, ratios = [], [], []
    for t in t_grid:
        s_inv = sched.sigma_inv(t)
        psi = sched.psi(t, dt)
        s_min.append(np.linalg.eigvalsh(s_inv)[0])
        norms.append(np.linalg.norm(psi, 2))
        # generalized eigenvalues of Psi relative to Sigma^{-1}
        mu = la.eigh(0.5 * (psi + psi.T), s_inv, eigvals_only=True)
        ratios.append(np.abs(mu).max())
    s_min, norms, ratios = map(np.asarray, (s_min, norms, ratios))
    excess = ratios - 1.0 / (t_grid**beta + R)
    worst = int(np.argmax(excess))
    with np.errstate(divide="ignore"):
        max_r = np.min(np.where(ratios > 0, 1.0 / ratios, np.inf) - t_grid**beta)
    sigma_min = float(s_min.min())
    kappa1 = float(np.trapezoid(norms, t_grid)) if t_grid.size > 1 else 0.0
    bound_violation = max(0.0, float(excess[worst]))
    sigma_violation = max(0.0, -sigma_min)
    return AssumptionReport(sigma_min, kappa1, sigma_violation, bound_violation,
                            float(t_grid[worst]), float(max_r),
                            holds=bound_violation == 0.0 and sigma_min > 0)


def running_min_residual(trace):
    """Prefix minimum ``min_{s <= t}`` of a residual series."""
    trace = np.asarray(trace, dtype=np.float64)
    if trace.size == 0:
        raise ValueError("residual series is empty")
    return np.minimum.accumulate(trace)
