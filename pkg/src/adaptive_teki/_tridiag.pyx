# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled tridiagonal kernels.

Signatures and semantics match :mod:`adaptive_teki._tridiag_py`.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def solve_tridiagonal(const double[:, ::1] lower, const double[:, ::1] diag,
                      const double[:, ::1] upper, const double[:, ::1] rhs):
    cdef Py_ssize_t nb = rhs.shape[0]
    cdef Py_ssize_t n = rhs.shape[1]
    cdef Py_ssize_t b, i
    cdef double m
    out = np.empty((nb, n), dtype=np.float64)
    cdef double[:, ::1] x = out
    cdef double[::1] cp = np.empty(n, dtype=np.float64)
    for b in range(nb):
        m = diag[b, 0]
        if m == 0.0:
            raise ZeroDivisionError(f"zero pivot at row 0 of system {b}")
        cp[0] = upper[b, 0] / m
        x[b, 0] = rhs[b, 0] / m
        for i in range(1, n):
            m = diag[b, i] - lower[b, i] * cp[i - 1]
            if m == 0.0:
                raise ZeroDivisionError(f"zero pivot at row {i} of system {b}")
            cp[i] = upper[b, i] / m
            x[b, i] = (rhs[b, i] - lower[b, i] * x[b, i - 1]) / m
        for i in range(n - 2, -1, -1):
            x[b, i] -= cp[i] * x[b, i + 1]
    return out


def darcy_pressure(const double[:, ::1] kappa, double h, const double[::1] source, bint harmonic):
    cdef Py_ssize_t nb = kappa.shape[0]
    cdef Py_ssize_t n = kappa.shape[1] - 2   # interior unknowns
    cdef Py_ssize_t b, i
    cdef double kl, kr, m, inv_h2 = 1.0 / (h * h)
    out = np.zeros((nb, n + 2), dtype=np.float64)
    cdef double[:, ::1] p = out
    cdef double[::1] cp = np.empty(n, dtype=np.float64)
    cdef double[::1] km = np.empty(n + 1, dtype=np.float64)
    for b in range(nb):
        for i in range(n + 1):
            kl = kappa[b, i]
            kr = kappa[b, i + 1]
            if harmonic:
                km[i] = 2.0 * kl * kr / (kl + kr)
            else:
                km[i] = 0.5 * (kl + kr)
        # row i couples interior nodes i, i+1, i+2 of the full grid
        m = (km[0] + km[1]) * inv_h2
        cp[0] = -km[1] * inv_h2 / m
        p[b, 1] = source[0] / m
        for i in range(1, n):
            m = (km[i] + km[i + 1]) * inv_h2 + km[i] * inv_h2 * cp[i - 1]
            cp[i] = -km[i + 1] * inv_h2 / m
            p[b, i + 1] = (source[i] + km[i] * inv_h2 * p[b, i]) / m
        for i in range(n - 2, -1, -1):
            p[b, i + 1] -= cp[i] * p[b, i + 2]
    return out
