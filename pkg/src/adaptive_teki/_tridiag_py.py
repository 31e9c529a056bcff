"""Pure-numpy tridiagonal kernels (fallback for the compiled extension).

Both routines run the Thomas algorithm over a batch of independent systems,
vectorized across the batch and looping over rows.
"""
import numpy as np


def solve_tridiagonal(lower, diag, upper, rhs):
    """Solve ``nb`` tridiagonal systems.

    All arguments are ``(nb, n)`` float arrays. ``lower[:, 0]`` and
    ``upper[:, -1]`` are ignored.
    """
    nb, n = rhs.shape
    cp = np.empty((nb, n))
    x = np.empty((nb, n))
    m = diag[:, 0].copy()
    if np.any(m == 0.0):
        raise ZeroDivisionError("zero pivot at row 0")
    cp[:, 0] = upper[:, 0] / m
    x[:, 0] = rhs[:, 0] / m
    for i in range(1, n):
        m = diag[:, i] - lower[:, i] * cp[:, i - 1]
        if np.any(m == 0.0):
            raise ZeroDivisionError(f"zero pivot at row {i}")
        cp[:, i] = upper[:, i] / m
        x[:, i] = (rhs[:, i] - lower[:, i] * x[:, i - 1]) / m
    for i in range(n - 2, -1, -1):
        x[:, i] -= cp[:, i] * x[:, i + 1]
    return x


def darcy_pressure(kappa, h, source, harmonic):
    """Conservative 3-point solve of ``-(kappa p')' = source`` with p=0 at both ends.

    ``kappa`` holds nodal values on the full grid, shape ``(nb, n + 2)``;
    ``source`` holds the ``n`` interior values. Returns the full-grid pressure.
    """
    kl, kr = kappa[:, :-1], kappa[:, 1:]
    km = 2.0 * kl * kr / (kl + kr) if harmonic else 0.5 * (kl + kr)
    inv_h2 = 1.0 / (h * h)
    diag = (km[:, :-1] + km[:, 1:]) * inv_h2
    off = -km[:, 1:-1] * inv_h2
    nb, n = diag.shape
    lower = np.zeros((nb, n))
    upper = np.zeros((nb, n))
    lower[:, 1:] = off
    upper[:, :-1] = off
    rhs = np.broadcast_to(source, (nb, n))
    p = np.zeros((nb, n + 2))
    p[:, 1:-1] = solve_tridiagonal(lower, diag, upper, rhs)
    return p
