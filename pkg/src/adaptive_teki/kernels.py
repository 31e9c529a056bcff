"""Backend selection for the tridiagonal kernels.

The compiled extension is used when it imports; otherwise the numpy
implementation. Setting ``ADAPTIVE_TEKI_PURE_PYTHON=1`` forces the fallback.
"""
import os

import numpy as np

from . import _tridiag_py

_compiled = None
if not os.environ.get("ADAPTIVE_TEKI_PURE_PYTHON"):
    try:
        from . import _tridiag as _compiled
    except ImportError:  # pragma: no cover - depends on build
        _compiled = None

_impl = _compiled if _compiled is not None else _tridiag_py
BACKEND = "compiled" if _compiled is not None else "python"


def _as_batch(a, nb, n):
    a = np.asarray(a, dtype=np.float64)
    return np.ascontiguousarray(np.broadcast_to(a, (nb, n)))


def solve_tridiagonal(lower, diag, upper, rhs):
    """Solve tridiagonal systems ``T x = rhs`` row-wise.

    ``rhs`` is ``(n,)`` or ``(nb, n)``; the three bands broadcast against it.
    ``lower[..., 0]`` and ``upper[..., -1]`` are ignored.
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    single = rhs.ndim == 1
    rhs2 = np.atleast_2d(rhs)
    nb, n = rhs2.shape
    x = _impl.solve_tridiagonal(_as_batch(lower, nb, n), _as_batch(diag, nb, n),
                                _as_batch(upper, nb, n), np.ascontiguousarray(rhs2))
    return x[0] if single else x


def darcy_pressure(kappa, h, source, harmonic=False):
    """Batched Darcy pressure solve; see :func:`adaptive_teki._tridiag_py.darcy_pressure`."""
    kappa = np.ascontiguousarray(np.atleast_2d(kappa), dtype=np.float64)
    source = np.ascontiguousarray(np.broadcast_to(
        np.asarray(source, dtype=np.float64), (kappa.shape[1] - 2,)))
    return _impl.darcy_pressure(kappa, float(h), source, bool(harmonic))
