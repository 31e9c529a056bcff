"""Ensemble Kalman inversion with and without the Tikhonov augmentation.

The augmented system stacks the data equation ``y = G(u) + eta_1`` with the
prior equation ``0 = u + eta_2`` so that plain EKI on ``(z, F, Sigma)``
minimizes the Tikhonov functional.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from . import ensemble
from .forward import ForwardModel, LinearModel
from .gaussian import CovOp


class NumericalError(FloatingPointError):
    """Non-finite values reached a gain computation or a solve failed."""


@dataclass
class Problem:
    """Data, noise covariance, and unscaled regularization covariance ``C0``."""

    model: ForwardModel
    y: np.ndarray
    gamma: CovOp
    c0: CovOp

    @property
    def dim_u(self):
        return self.model.dim_u

    @property
    def dim_y(self):
        return self.model.dim_y


class AugmentedSystem:
    """The lift ``z = (y; 0)``, ``F(u) = (G(u); u)``, ``Sigma = diag(Gamma, reg)``.

    ``reg`` is the (already scaled) regularization covariance, e.g.
    ``C0 / lambda``; ``reg=None`` gives the unaugmented system used by vanilla EKI.
    """

    def __init__(self, y, gamma, reg=None):
        self.y = np.asarray(y, dtype=np.float64)
        self.gamma = gamma
        self.reg = reg
        self.K = self.y.size
        self.d = 0 if reg is None else reg.dim
        self.z = np.concatenate([self.y, np.zeros(self.d)])

    @classmethod
    def tikhonov(cls, problem, lam):
        return cls(problem.y, problem.gamma, problem.c0.scaled(1.0 / lam))

    @property
    def dim(self):
        return self.K + self.d

    @property
    def sigma(self):
        s = np.zeros((self.dim, self.dim))
        s[:self.K, :self.K] = self.gamma.matrix
        if self.reg is not None:
            s[self.K:, self.K:] = self.reg.matrix
        return s

    def lift(self, U, GU):
        """Rows of ``F(u_j)`` given particles and their forward images."""
        if self.reg is None:
            return np.asarray(GU)
        return np.hstack([GU, U])

    def noise(self, xi):
        """Map standard normals ``(J, dim)`` to ``N(0, Sigma)`` draws, blockwise."""
        out = np.empty_like(xi)
        out[:, :self.K] = xi[:, :self.K] @ self.gamma.sqrt().T
        if self.reg is not None:
            out[:, self.K:] = xi[:, self.K:] @ self.reg.sqrt().T
        return out

    def whitened(self, V):
        """Rows ``Sigma^{-1/2} v`` using the block factors."""
        parts = [self.gamma.whiten(V[:, :self.K])]
        if self.reg is not None:
            parts.append(self.reg.whiten(V[:, self.K:]))
        return np.hstack(parts)


def predict(FU, sys, rng=None, h=1.0, xi=None):
    """Perturbed predictions ``z_j = F(u_j) + zeta_j``, ``zeta_j ~ N(0, Sigma / h)``.

    ``xi`` fixes the standard-normal input (pass zeros to switch noise off).
    """
    FU = np.asarray(FU, dtype=np.float64)
    if xi is None:
        xi = rng.standard_normal(FU.shape)
    return FU + sys.noise(xi) / np.sqrt(h)


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericalError("non-finite value entered the Kalman gain")


def kalman_gain(U, FU, sigma, h=1.0):
    """``B_up (B_pp + Sigma / h)^{-1}``, shape ``(d, m)``."""
    c_up = ensemble.cov_cross(U, FU)
    s = ensemble.cov_auto(FU) + sigma / h
    _check_finite(c_up, s)
    try:
        cf = la.cho_factor(s, lower=True)
    except la.LinAlgError as exc:
        raise NumericalError(f"innovation covariance not SPD: {exc}") from exc
    return la.cho_solve(cf, c_up.T).T


def teki_update(U, FU, Z, sys, h=1.0):
    """One Kalman step ``u_j + B_up (B_pp + Sigma/h)^{-1} (z - z_j)`` for all rows."""
    gain = kalman_gain(U, FU, sys.sigma, h)
    return U + (sys.z - Z) @ gain.T


def teki_update_per_particle(U, FU, Z, z, sigmas, h=1.0):
    """Kalman step where particle ``j`` uses its own noise covariance ``sigmas[j]``."""
    c_up = ensemble.cov_cross(U, FU)
    c_pp = ensemble.cov_auto(FU)
    S = c_pp[None, :, :] + sigmas / h
    _check_finite(c_up, S)
    innov = np.linalg.solve(S, (z - Z)[:, :, None])[:, :, 0]
    return U + innov @ c_up.T


def teki_step(U, problem, reg, rng, h=1.0):
    """Predict and update with a fixed regularization covariance ``reg``."""
    sys = AugmentedSystem(problem.y, problem.gamma, reg)
    GU = problem.model.apply_batch(U)
    FU = sys.lift(U, GU)
    Z = predict(FU, sys, rng, h)
    return teki_update(U, FU, Z, sys, h)


def vanilla_update(U, model, gamma, y, h=1.0, rng=None, xi=None):
    """Unregularized EKI step (``z = y``, ``Sigma = Gamma``)."""
    sys = AugmentedSystem(y, gamma, None)
    GU = model.apply_batch(U)
    Z = predict(GU, sys, rng, h, xi=xi)
    return teki_update(U, GU, Z, sys, h)


def _forward(G, U):
    if isinstance(G, ForwardModel):
        return G.apply_batch(np.atleast_2d(U))
    return np.atleast_2d(U) @ np.asarray(G).T


def tikhonov_loss(u, y, G, gamma, c0, lam):
    """``1/2 |y - G(u)|^2_Gamma + lam/2 |u|^2_C0``; row-wise for 2-D ``u``."""
    u = np.asarray(u, dtype=np.float64)
    r = y - _forward(G, u)
    val = 0.5 * gamma.norm_sq(r) + 0.5 * lam * c0.norm_sq(np.atleast_2d(u))
    return float(val[0]) if u.ndim == 1 else val


def normal_matrix(A, gamma, c0, lam):
    """Hessian ``A^T Gamma^{-1} A + lam C0^{-1}`` of the Tikhonov functional."""
    return A.T @ gamma.solve(A) + lam * c0.inv()


def tikhonov_minimizer(A, gamma, c0, lam, y):
    """``T_lam(y) = (A^T Gamma^-1 A + lam C0^-1)^{-1} A^T Gamma^-1 y``.

    ``y`` may be a batch with one data vector per row.
    """
    A = np.asarray(A, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    cf = la.cho_factor(normal_matrix(A, gamma, c0, lam), lower=True)
    rhs = A.T @ gamma.solve(y.T)
    return la.cho_solve(cf, rhs).T


def residual_sq(U, u_star, A, gamma, c_reg):
    """Mean whitened residual ``|Gamma^-1/2 A e|^2 + |C^-1/2 e|^2``, ``e = u_j - u*``."""
    E = np.atleast_2d(U) - u_star
    return float(np.mean(gamma.norm_sq(E @ np.asarray(A).T) + c_reg.norm_sq(E)))


def best_lambda(A, gamma, c0, y, u_truth, grid):
    """Grid search for ``argmin_lam |T_lam(y) - u_truth|^2``.

    Returns ``(lam_best, curve)`` with ``curve[i] = |T_grid[i](y) - u_truth|^2``.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("lambda grid is empty")
    curve = np.array([np.sum((tikhonov_minimizer(A, gamma, c0, lam, y) - u_truth) ** 2)
                      for lam in grid])
    return float(grid[np.argmin(curve)]), curve


def linear_part(model):
    if isinstance(model, LinearModel):
        return model.A
    raise TypeError("operation requires a linear forward model")
