"""Forward maps: the linear elliptic benchmark and 1-D Darcy flow with a KL parameterization."""
import csv

import numpy as np

from .kernels import darcy_pressure, solve_tridiagonal

ELLIPTIC_H = 2.0**-4
ELLIPTIC_LENGTH = np.pi
DARCY_H = 2.0**-6


def n_intervals(length, h):
    """Number of uniform cells; the effective mesh width is ``length / n``."""
    n = int(round(length / h))
    if n < 2:
        raise ValueError(f"mesh width {h} too coarse for domain length {length}")
    return n


class ForwardModel:
    """Deterministic map ``G: R^dim_u -> R^dim_y``.

    Subclasses implement :meth:`apply_batch` on ``(J, dim_u)`` arrays.
    :meth:`jacobian` defaults to central differences.
    """

    dim_u: int
    dim_y: int

    def apply_batch(self, U):
        raise NotImplementedError

    def apply(self, u):
        return self.apply_batch(np.asarray(u, dtype=np.float64)[None, :])[0]

    __call__ = apply

    def jacobian(self, u):
        return numeric_jacobian(self, u)


class LinearModel(ForwardModel):
    def __init__(self, A):
        self.A = np.array(A, dtype=np.float64, ndmin=2)
        self.dim_y, self.dim_u = self.A.shape

    def apply_batch(self, U):
        return np.asarray(U) @ self.A.T

    def jacobian(self, u=None):
        return self.A


class ObservationOp:
    """Point evaluation of full-grid functions at ``K`` equidistant interior points.

    Points sit at ``k * length / (K + 1)`` and are snapped to the nearest node.
    """

    def __init__(self, points, nodes):
        self.points = np.asarray(points, dtype=np.float64)
        self.nodes = np.asarray(nodes, dtype=np.intp)

    @classmethod
    def equidistant(cls, K, n, length):
        k = np.arange(1, K + 1)
        points = k * length / (K + 1)
        nodes = np.rint(points / (length / n)).astype(np.intp)
        if np.any(nodes <= 0) or np.any(nodes >= n) or np.unique(nodes).size != K:
            raise ValueError(f"cannot place {K} distinct interior observations on {n} cells")
        return cls(points, nodes)

    @property
    def K(self):
        return self.nodes.size

    def apply(self, p):
        """Observe full-grid values ``p`` (last axis has ``n + 1`` nodes)."""
        return np.asarray(p)[..., self.nodes]


def _elliptic_bands(n, h):
    inv_h2 = 1.0 / h**2
    m = n - 1
    lower = np.full(m, inv_h2)
    upper = np.full(m, inv_h2)
    diag = np.full(m, 1.0 - 2.0 * inv_h2)
    return lower, diag, upper


def _check_elliptic_invertible(n, h):
    # eigenvalues of the discrete p'' + p operator, known in closed form
    k = np.arange(1, n)
    ev = 1.0 - 4.0 / h**2 * np.sin(k * np.pi / (2 * n)) ** 2
    if np.min(np.abs(ev)) <= 1e-12 * 4.0 / h**2:
        raise np.linalg.LinAlgError("discrete p'' + p operator is singular on this grid")


def elliptic1d_solve(u, h=None, length=ELLIPTIC_LENGTH):
    """Solve ``p'' + p = u`` on ``(0, length)`` with ``p = 0`` at both ends.

    ``u`` holds the ``n - 1`` interior nodal values (or a batch of them in the
    rows of a 2-D array); the interior solution has the same shape. The
    3-point second difference is used on the uniform grid of ``n`` cells.
    If given, ``h`` must agree with ``length / n`` after rounding to whole cells.
    """
    u = np.asarray(u, dtype=np.float64)
    n = u.shape[-1] + 1
    if h is not None and n_intervals(length, h) != n:
        raise ValueError(f"{n - 1} interior values do not match mesh width {h}")
    hh = length / n
    _check_elliptic_invertible(n, hh)
    lower, diag, upper = _elliptic_bands(n, hh)
    return solve_tridiagonal(lower, diag, upper, u)


def elliptic_grid(h=ELLIPTIC_H, length=ELLIPTIC_LENGTH):
    """Full grid of the elliptic problem (``n + 1`` nodes including boundaries)."""
    n = n_intervals(length, h)
    return np.linspace(0.0, length, n + 1)


def build_linear_operator(h=ELLIPTIC_H, K=8, length=ELLIPTIC_LENGTH):
    """Assemble ``A = O o G`` column by column from unit nodal sources.

    The returned :class:`LinearModel` carries ``obs`` (the observation
    operator) and ``grid`` (interior node coordinates) as attributes.
    """
    n = n_intervals(length, h)
    d = n - 1
    p_int = elliptic1d_solve(np.eye(d), h=length / n, length=length)
    p_full = np.zeros((d, n + 1))
    p_full[:, 1:-1] = p_int
    obs = ObservationOp.equidistant(K, n, length)
    model = LinearModel(obs.apply(p_full).T)
    model.obs = obs
    model.grid = np.linspace(0.0, length, n + 1)[1:-1]
    return model


def darcy1d_solve(kappa, h=DARCY_H, source=1.0, harmonic=False):
    """Solve ``-(kappa p')' = source`` on ``[0, 1]`` with homogeneous Dirichlet data.

    Parameters
    ----------
    kappa : (n+1,) or (J, n+1) array
        Positive nodal permeability on the full grid. Half-node values are
        arithmetic means of neighbours (``harmonic=True`` for harmonic means).
    h : float
        Mesh width; must match ``1 / n``.
    source : float or (n-1,) array
        Right-hand side at the interior nodes.

    Returns
    -------
    p : array shaped like ``kappa``
        Full-grid pressure including the zero boundary values.
    """
    kappa = np.asarray(kappa, dtype=np.float64)
    n = kappa.shape[-1] - 1
    if not np.isclose(n * h, 1.0, rtol=1e-10):
        raise ValueError(f"kappa has {n + 1} nodes but h = {h} implies {round(1 / h) + 1}")
    bad = np.argwhere(~(kappa > 0))
    if bad.size:
        node = bad[0][-1]
        raise ValueError(f"permeability must be positive; node {node} has value "
                         f"{kappa[tuple(bad[0])]!r}")
    p = darcy_pressure(np.atleast_2d(kappa), h, source, harmonic)
    return p[0] if kappa.ndim == 1 else p


class KLMap:
    """Truncated expansion ``u(x) = sum_j xi_j phi_j(x)`` on the Darcy grid.

    ``phi_j(x) = sqrt(2 pi) sin(2 pi j x)``. With ``literal=True`` every
    ``phi_j`` is ``sqrt(2 pi) sin(2 pi x)`` instead (the frequency does not
    grow with ``j``).
    """

    def __init__(self, d=16, n=64, literal=False):
        self.d = d
        self.x = np.linspace(0.0, 1.0, n + 1)
        j = np.ones(d) if literal else np.arange(1, d + 1)
        self.basis = np.sqrt(2 * np.pi) * np.sin(2 * np.pi * np.outer(self.x, j))
        self.literal = literal

    def field(self, xi):
        return np.asarray(xi) @ self.basis.T


class DarcyModel(ForwardModel):
    """``xi -> O(p)`` with ``p`` solving Darcy flow for ``kappa = exp(u^xi)``."""

    def __init__(self, d=16, K=16, h=DARCY_H, source=1.0, harmonic=False, literal_kl=False):
        n = n_intervals(1.0, h)
        self.h = 1.0 / n
        self.klmap = KLMap(d, n, literal=literal_kl)
        self.obs = ObservationOp.equidistant(K, n, 1.0)
        self.source = source
        self.harmonic = harmonic
        self.dim_u, self.dim_y = d, K
        self.grid = self.klmap.x

    def pressure(self, U):
        kappa = np.exp(self.klmap.field(np.atleast_2d(U)))
        return darcy1d_solve(kappa, self.h, self.source, self.harmonic)

    def apply_batch(self, U):
        return self.obs.apply(self.pressure(U))


def darcy_forward(xi, klmap, obs, h=DARCY_H, source=1.0):
    """Functional form of :class:`DarcyModel` for a single coefficient vector."""
    kappa = np.exp(klmap.field(xi))
    return obs.apply(darcy1d_solve(kappa, h, source))


def numeric_jacobian(model, u, step=None):
    """Central-difference Jacobian ``(dim_y, dim_u)`` from one batched evaluation."""
    u = np.asarray(u, dtype=np.float64)
    d = u.size
    if step is None:
        step = 1e-6 * (1.0 + np.abs(u).max())
    E = step * np.eye(d)
    out = model.apply_batch(np.vstack([u + E, u - E]))
    return ((out[:d] - out[d:]) / (2.0 * step)).T


def write_grid_csv(path, x, values, header=("x", "value")):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for xi, vi in zip(x, values):
            w.writerow([repr(float(xi)), repr(float(vi))])
