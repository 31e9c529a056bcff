"""Covariance operators, their factors, and seeded Gaussian sampling."""
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
from scipy.linalg import lapack

PIVOT_RTOL = 1e-12
SYMMETRY_RTOL = 1e-12


class FactorizationError(np.linalg.LinAlgError):
    """Raised when a covariance is not (numerically) positive definite."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


def cholesky_lower(matrix):
    """Lower Cholesky factor with the package's pivot tolerance.

    Raises :class:`FactorizationError` naming the first failing pivot (0-based).
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    d = matrix.shape[0]
    c, info = lapack.dpotrf(matrix, lower=1, clean=1)
    if info > 0:
        raise FactorizationError(
            f"covariance is not positive definite: pivot {info - 1} failed", pivot=info - 1)
    if info < 0:  # pragma: no cover - invalid argument to LAPACK
        raise ValueError(f"dpotrf: illegal value in argument {-info}")
    tol = PIVOT_RTOL * np.trace(matrix) / d
    piv = np.diag(c) ** 2
    bad = np.flatnonzero(piv <= tol)
    if bad.size:
        raise FactorizationError(
            f"covariance is near-singular: pivot {bad[0]} = {piv[bad[0]]:.3e} "
            f"below tolerance {tol:.3e}", pivot=int(bad[0]))
    return c


@dataclass(frozen=True, eq=False)
class CovOp:
    """Dense SPD covariance with a cached Cholesky factor.

    Parameters
    ----------
    matrix : (d, d) array_like
        Symmetric positive-definite matrix.
    """

    matrix: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64, ndmin=2)
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"covariance must be square, got {m.shape}")
        scale = max(np.abs(m).max(), np.finfo(float).tiny)
        if np.abs(m - m.T).max() > SYMMETRY_RTOL * scale:
            raise ValueError("covariance is not symmetric")
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        c = cholesky_lower(m)
        c.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "chol", c)

    @classmethod
    def scaled_identity(cls, d, variance=1.0):
        return cls(variance * np.eye(d))

    @property
    def dim(self):
        return self.matrix.shape[0]

    def sqrt(self):
        """Square-root factor ``S`` with ``S S^T = matrix``."""
        return self.chol

    def solve(self, b):
        """``matrix^{-1} b`` for a vector or a (d, k) block."""
        return la.cho_solve((self.chol, True), b)

    def whiten(self, v):
        """``chol^{-1} v``; for stacked rows pass ``v`` with shape (n, d)."""
        v = np.asarray(v, dtype=np.float64)
        if v.ndim == 1:
            return la.solve_triangular(self.chol, v, lower=True)
        return la.solve_triangular(self.chol, v.T, lower=True).T

    def inv(self):
        return self.solve(np.eye(self.dim))

    def norm_sq(self, v):
        """Weighted squared norm ``|chol^{-1} v|^2`` (row-wise for 2-D input)."""
        w = self.whiten(v)
        return np.sum(w * w, axis=-1)

    def scaled(self, factor):
        return CovOp(factor * self.matrix)

    def logdet(self):
        return 2.0 * np.sum(np.log(np.diag(self.chol)))


@dataclass(frozen=True, eq=False)
class EigenCov:
    """Covariance ``U diag(1/theta) U^T`` held through its eigenbasis.

    ``theta`` are precisions (reciprocal eigenvalues).
    """

    basis: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        u = np.array(self.basis, dtype=np.float64, ndmin=2)
        th = np.array(self.theta, dtype=np.float64, ndmin=1)
        if u.shape != (th.size, th.size):
            raise ValueError("basis must be (d, d) with d = len(theta)")
        if np.any(~np.isfinite(th)) or np.any(th <= 0):
            raise ValueError("precisions must be finite and strictly positive")
        if np.abs(u.T @ u - np.eye(th.size)).max() > 1e-10:
            raise ValueError("basis is not orthonormal")
        u.setflags(write=False)
        th.setflags(write=False)
        object.__setattr__(self, "basis", u)
        object.__setattr__(self, "theta", th)

    @classmethod
    def from_matrix(cls, matrix):
        w, u = np.linalg.eigh(np.asarray(matrix, dtype=np.float64))
        if np.any(w <= 0):
            raise FactorizationError("matrix has nonpositive eigenvalues")
        return cls(u, 1.0 / w)

    @property
    def dim(self):
        return self.theta.size

    @property
    def matrix(self):
        return (self.basis / self.theta) @ self.basis.T

    def sqrt(self):
        return self.basis / np.sqrt(self.theta)

    def solve(self, b):
        u = self.basis
        b = np.asarray(b, dtype=np.float64)
        if b.ndim == 1:
            return u @ (self.theta * (u.T @ b))
        return u @ (self.theta[:, None] * (u.T @ b))

    def inv(self):
        return (self.basis * self.theta) @ self.basis.T

    def whiten(self, v):
        v = np.asarray(v, dtype=np.float64)
        return (v @ self.basis) * np.sqrt(self.theta)

    def norm_sq(self, v):
        w = self.whiten(v)
        return np.sum(w * w, axis=-1)

    def scaled(self, factor):
        return EigenCov(self.basis, self.theta / factor)

    def with_theta(self, theta):
        return EigenCov(self.basis, theta)

    def logdet(self):
        return -np.sum(np.log(self.theta))


class SeededRng:
    """Reproducible normal stream keyed by ``(seed, stream)``.

    Streams with different ids are statistically independent; identical keys
    give identical draws (PCG64 under a spawned SeedSequence).
    """

    def __init__(self, seed, stream=()):
        stream = (stream,) if np.isscalar(stream) else tuple(stream)
        self.seed = int(seed)
        self.stream = stream
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(int(s) for s in stream))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def child(self, *keys):
        """Independent sub-stream, deterministic in the parent key and ``keys``."""
        return SeededRng(self.seed, self.stream + tuple(keys))

    def standard_normal(self, size=None):
        return self._gen.standard_normal(size)

    def __repr__(self):
        return f"SeededRng(seed={self.seed}, stream={self.stream})"


def sample_gaussian(mean, cov, rng, size=None, xi=None):
    """Draw ``mean + S xi`` with ``S`` the covariance square root.

    ``size`` gives the number of i.i.d. draws (rows of the result). ``xi``
    overrides the standard-normal input, which the tests use to pin the noise.
    """
    mean = np.asarray(mean, dtype=np.float64)
    if mean.shape[-1] != cov.dim:
        raise ValueError(f"mean has dimension {mean.shape[-1]}, covariance {cov.dim}")
    if xi is None:
        shape = (cov.dim,) if size is None else (size, cov.dim)
        xi = rng.standard_normal(shape)
    xi = np.asarray(xi, dtype=np.float64)
    return mean + xi @ cov.sqrt().T


def dirichlet_laplacian(d, length=1.0):
    """Positive-definite ``-Delta`` on ``d`` interior nodes of ``[0, length]``."""
    h = length / (d + 1)
    return (2.0 * np.eye(d) - np.eye(d, k=1) - np.eye(d, k=-1)) / h**2


def laplacian_cov(d, scale=1.0, shift=0.0, power=1.0, length=1.0):
    """``scale * (shift I - Delta)^(-power)`` on a uniform Dirichlet grid.

    Fractional powers go through the eigen-decomposition of the stencil matrix.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    if shift < 0:
        raise ValueError("shift must be nonnegative")
    op = shift * np.eye(d) + dirichlet_laplacian(d, length)
    w, u = np.linalg.eigh(op)
    if np.any(w <= 0):
        raise FactorizationError("shifted Laplacian is not positive definite")
    m = (u * (scale * w ** (-power))) @ u.T
    return CovOp(0.5 * (m + m.T))


def kl_spectrum(d, sigma=1.0, tau=0.0, nu=1.0):
    """Karhunen-Loeve variances ``(sigma^2 / (j + tau)^2)^nu`` for ``j = 1..d``."""
    if sigma <= 0 or tau < 0 or nu < 0:
        raise ValueError("need sigma > 0, tau >= 0, nu >= 0")
    j = np.arange(1, d + 1, dtype=np.float64)
    return (sigma**2 / (j + tau) ** 2) ** nu
