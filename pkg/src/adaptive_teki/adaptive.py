"""Adaptive Tikhonov schemes run between the prediction and the Kalman update.

Every ``*_iterate`` function draws one ``(J, K + d)`` block of standard
normals from ``rng``. The first ``K`` columns give the data perturbations,
which double as bootstrap training data; the last ``d`` columns are scaled by
the square root of the freshly learned regularization covariance.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from . import ensemble
from .gaussian import EigenCov
from .teki import (AugmentedSystem, NumericalError, teki_update,
                   teki_update_per_particle)

log = logging.getLogger(__name__)

LAMBDA_MIN = 1e-8
LAMBDA_MAX = 1e8
THETA_MIN = 1e-8


@dataclass
class ArmijoControl:
    gamma0: float = 1.0
    c1: float = 1e-4
    rho: float = 0.5
    gamma_floor: float = 1e-12
    lam_min: float = LAMBDA_MIN
    lam_max: float = LAMBDA_MAX


@dataclass
class RegState:
    """Current regularization of one path.

    ``variant`` is ``"none"`` (vanilla EKI), ``"scalar"`` (``lam``), ``"particles"`` (``lams``, one per
    particle) or ``"precision"`` (``theta`` in the fixed eigenbasis ``basis``).
    """

    variant: str = "none"
    lam: float = None
    lams: np.ndarray = None
    theta: np.ndarray = None
    basis: np.ndarray = None
    lam_min: float = LAMBDA_MIN
    lam_max: float = LAMBDA_MAX
    theta_min: float = THETA_MIN
    rate: float = 1.0
    floor_hits: int = 0
    history: list = field(default_factory=list)

    @classmethod
    def scalar(cls, lam, **kw):
        return cls("scalar", lam=float(lam), **kw)

    @classmethod
    def particles(cls, lams, **kw):
        return cls("particles", lams=np.array(lams, dtype=np.float64), **kw)

    @classmethod
    def precision(cls, c0, lam0=1.0, **kw):
        """Start from ``C0 / lam0`` in the eigenbasis of ``C0``."""
        w, u = np.linalg.eigh(c0.matrix)
        return cls("precision", theta=lam0 / w, basis=u, **kw)

    def record(self):
        if self.variant == "none":
            self.history.append(None)
        elif self.variant == "scalar":
            self.history.append(self.lam)
        elif self.variant == "particles":
            self.history.append(self.lams.copy())
        else:
            self.history.append(self.theta.copy())

    def summary(self):
        """``(lambda, theta_min, theta_max)``; absent entries are ``None``."""
        if self.variant == "none":
            return None, None, None
        if self.variant == "scalar":
            return self.lam, None, None
        if self.variant == "particles":
            return float(np.mean(self.lams)), None, None
        return None, float(self.theta.min()), float(self.theta.max())

    def check(self):
        if self.variant == "none":
            return
        vals = {"scalar": self.lam, "particles": self.lams, "precision": self.theta}[self.variant]
        if not (np.all(np.isfinite(vals)) and np.all(np.asarray(vals) > 0)):
            raise NumericalError(f"regularization state left the positive reals: {vals}")


@dataclass
class TrainingBatch:
    """Bootstrap pairs ``(u_j, y_j)`` with ``y_j = G(u_j) + eta_j``; ``shift`` is subtracted from ``y``."""

    particles: np.ndarray
    data: np.ndarray
    shift: np.ndarray = 0.0

    @property
    def shifted(self):
        return self.data - self.shift


def _tikhonov_parts(lam, batch, A, gamma, c0):
    A = np.asarray(A, dtype=np.float64)
    M = A.T @ gamma.solve(A) + lam * c0.inv()
    cf = la.cho_factor(M, lower=True)
    T = la.cho_solve(cf, A.T @ gamma.solve(batch.shifted.T)).T
    return cf, T


def bilevel_objective(lam, batch, A, gamma, c0):
    """``f(lam) = (1/J) sum 1/2 |T_lam(y_j) - u_j|^2``."""
    _, T = _tikhonov_parts(lam, batch, A, gamma, c0)
    v = T - batch.particles
    return 0.5 * float(np.mean(np.sum(v * v, axis=1)))


def bilevel_gradient(lam, batch, A, gamma, c0):
    """Closed-form ``f'(lam)``.

    With ``M = A^T Gamma^-1 A + lam C0^-1`` one has
    ``dT/dlam = -M^-1 C0^-1 T_lam(y)``, so ``f' = (1/J) sum v_j . dT_j``.
    """
    cf, T = _tikhonov_parts(lam, batch, A, gamma, c0)
    dT = -la.cho_solve(cf, c0.solve(T.T)).T
    v = T - batch.particles
    return float(np.mean(np.sum(v * dT, axis=1)))


def armijo_lambda_step(lam, batch, A, gamma, c0, ctrl=None):
    """Projected gradient step on ``f`` with backtracking (Armijo) step size.

    Returns ``lam`` unchanged when the gradient vanishes or no step with
    sufficient decrease is found before the step falls below ``gamma_floor``.
    Candidates where the normal matrix cannot be factored are rejected.
    """
    ctrl = ctrl or ArmijoControl()
    g = bilevel_gradient(lam, batch, A, gamma, c0)
    if g == 0.0 or not np.isfinite(g):
        return lam
    f0 = bilevel_objective(lam, batch, A, gamma, c0)
    step = ctrl.gamma0
    while step >= ctrl.gamma_floor:
        cand = min(max(lam - step * g, ctrl.lam_min), ctrl.lam_max)
        if cand != lam:
            try:
                fc = bilevel_objective(cand, batch, A, gamma, c0)
            except la.LinAlgError:
                # normal matrix singular to working precision at tiny lambda
                fc = np.inf
            if fc <= f0 - ctrl.c1 * g * (lam - cand):
                return cand
        step *= ctrl.rho
    return lam


def linearize(model, ubar):
    """Affine surrogate ``G(u) ~ A u + a`` tangent at ``ubar``."""
    A = np.asarray(model.jacobian(ubar), dtype=np.float64)
    a = model.apply(ubar) - A @ ubar
    return A, a


def map_lambda(U, c0, lam_min=LAMBDA_MIN, lam_max=LAMBDA_MAX):
    """Ensemble-averaged MAP critical point ``((1/(J d)) sum |u_j|^2_C0)^-1``, projected."""
    U = np.atleast_2d(U)
    s = float(np.mean(c0.norm_sq(U))) / U.shape[1]
    if s <= 0:
        return lam_max
    return min(max(1.0 / s, lam_min), lam_max)


def theta_update(theta, vbar, rho=1.0, theta_min=THETA_MIN):
    """Precision update ``theta - rho (vbar^2 / 2 - 1 / (2 theta))`` floored at ``theta_min``.

    Returns ``(theta_new, n_floored)``.
    """
    theta = np.asarray(theta, dtype=np.float64)
    new = theta - rho * (0.5 * np.asarray(vbar) ** 2 - 0.5 / theta)
    low = new < theta_min
    return np.where(low, theta_min, new), int(low.sum())


def _draw(rng, J, problem):
    return rng.standard_normal((J, problem.dim_y + problem.dim_u))


def _predictions(GU, U, problem, xi, h, reg_sqrt_scale=None, reg=None):
    """Perturbed lifted predictions; returns ``(FU, Z, eta)`` with ``eta ~ N(0, Gamma)``."""
    K = problem.dim_y
    eta = xi[:, :K] @ problem.gamma.sqrt().T
    if reg_sqrt_scale is not None:
        reg_noise = (xi[:, K:] @ problem.c0.sqrt().T) * reg_sqrt_scale[:, None]
    else:
        reg_noise = xi[:, K:] @ reg.sqrt().T
    FU = np.hstack([GU, U])
    Z = FU + np.hstack([eta, reg_noise]) / np.sqrt(h)
    return FU, Z, eta


def fixed_iterate(state, U, problem, rng, h=1.0):
    """Fixed-lambda TEKI step; ``state`` is returned unchanged."""
    reg = problem.c0.scaled(1.0 / state.lam)
    GU = problem.model.apply_batch(U)
    xi = _draw(rng, U.shape[0], problem)
    FU, Z, _ = _predictions(GU, U, problem, xi, h, reg=reg)
    sys = AugmentedSystem(problem.y, problem.gamma, reg)
    return teki_update(U, FU, Z, sys, h), state


def algorithm1_iterate(state, U, problem, rng, h=1.0, ctrl=None):
    """Bilevel (parametric bootstrap) learning of a scalar lambda, then TEKI."""
    GU = problem.model.apply_batch(U)
    xi = _draw(rng, U.shape[0], problem)
    A, a = linearize(problem.model, ensemble.mean(U))
    eta = xi[:, :problem.dim_y] @ problem.gamma.sqrt().T
    batch = TrainingBatch(U, GU + eta, a)
    if ctrl is None:
        ctrl = ArmijoControl(lam_min=state.lam_min, lam_max=state.lam_max)
    state.lam = armijo_lambda_step(state.lam, batch, A, problem.gamma, problem.c0, ctrl)
    state.check()
    reg = problem.c0.scaled(1.0 / state.lam)
    FU, Z, _ = _predictions(GU, U, problem, xi, h, reg=reg)
    sys = AugmentedSystem(problem.y, problem.gamma, reg)
    return teki_update(U, FU, Z, sys, h), state


def algorithm2_iterate(state, U, problem, rng, h=1.0):
    """MAP critical-point lambda from the current ensemble, then TEKI."""
    GU = problem.model.apply_batch(U)
    xi = _draw(rng, U.shape[0], problem)
    state.lam = map_lambda(U, problem.c0, state.lam_min, state.lam_max)
    state.check()
    reg = problem.c0.scaled(1.0 / state.lam)
    FU, Z, _ = _predictions(GU, U, problem, xi, h, reg=reg)
    sys = AugmentedSystem(problem.y, problem.gamma, reg)
    return teki_update(U, FU, Z, sys, h), state


def algorithm3_iterate(state, U, problem, rng, h=1.0):
    """Learn the precisions of the regularization covariance in the eigenbasis of C0, then TEKI."""
    GU = problem.model.apply_batch(U)
    xi = _draw(rng, U.shape[0], problem)
    vbar = ensemble.mean(U @ state.basis)
    state.theta, hits = theta_update(state.theta, vbar, state.rate, state.theta_min)
    if hits:
        state.floor_hits += hits
        log.debug("theta floor hit for %d components", hits)
    state.check()
    reg = EigenCov(state.basis, state.theta)
    FU, Z, _ = _predictions(GU, U, problem, xi, h, reg=reg)
    sys = AugmentedSystem(problem.y, problem.gamma, reg)
    return teki_update(U, FU, Z, sys, h), state


def two_level_lambda_iterate(state, U, problem, rng, h=1.0):
    """Per-particle lambdas: TEKI with ``Sigma(lam_j)`` then a gradient step on each ``lam_j``."""
    J, d = U.shape
    K = problem.dim_y
    GU = problem.model.apply_batch(U)
    xi = _draw(rng, J, problem)
    lams = state.lams
    FU, Z, _ = _predictions(GU, U, problem, xi, h, reg_sqrt_scale=1.0 / np.sqrt(lams))
    sigmas = np.zeros((J, K + d, K + d))
    sigmas[:, :K, :K] = problem.gamma.matrix
    sigmas[:, K:, K:] = problem.c0.matrix[None, :, :] / lams[:, None, None]
    z = np.concatenate([problem.y, np.zeros(d)])
    U_new = teki_update_per_particle(U, FU, Z, z, sigmas, h)
    norms = problem.c0.norm_sq(U)
    new = lams - state.rate * (0.5 * norms - 0.5 * d / lams)
    low = new < state.lam_min
    if low.any():
        state.floor_hits += int(low.sum())
        log.debug("lambda floor hit for %d particles", int(low.sum()))
    state.lams = np.clip(new, state.lam_min, state.lam_max)
    state.check()
    return U_new, state


def vanilla_iterate(state, U, problem, rng, h=1.0):
    """Unregularized EKI; draws the same noise block shape as the other schemes."""
    GU = problem.model.apply_batch(U)
    xi = _draw(rng, U.shape[0], problem)
    eta = xi[:, :problem.dim_y] @ problem.gamma.sqrt().T
    sys = AugmentedSystem(problem.y, problem.gamma, None)
    return teki_update(U, GU, GU + eta / np.sqrt(h), sys, h), state


SCHEMES = {
    "vanilla": vanilla_iterate,
    "fixed": fixed_iterate,
    "bilevel": algorithm1_iterate,
    "map": algorithm2_iterate,
    "two-level-lambda": two_level_lambda_iterate,
    "covariance": algorithm3_iterate,
}
ADAPTIVE_SCHEMES = ("bilevel", "map", "two-level-lambda", "covariance")


def initial_state(scheme, problem, J, lam0=1.0, rate=1.0, lam_min=LAMBDA_MIN, lam_max=LAMBDA_MAX,
                  theta_min=THETA_MIN):
    if scheme == "vanilla":
        return RegState("none")
    if scheme == "two-level-lambda":
        return RegState.particles(np.full(J, lam0), lam_min=lam_min, lam_max=lam_max, rate=rate)
    if scheme == "covariance":
        return RegState.precision(problem.c0, lam0, theta_min=theta_min, rate=rate)
    return RegState.scalar(lam0, lam_min=lam_min, lam_max=lam_max, rate=rate)
