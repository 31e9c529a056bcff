"""Empirical ensemble statistics.

An ensemble is a ``(J, d)`` array whose rows are particles; mapped ensembles
(forward images) are ``(J, m)`` arrays aligned row by row. All covariances use
the divisor ``J``.
"""
import numpy as np


def mean(ens):
    return np.mean(ens, axis=0)


mapped_mean = mean


def anomalies(ens):
    return ens - ens.mean(axis=0)


def cov_cross(ens, mens):
    """``(1/J) sum (u_j - u_bar)(F_j - F_bar)^T``, shape ``(d, m)``."""
    J = ens.shape[0]
    if mens.shape[0] != J:
        raise ValueError("ensembles are not index-aligned")
    return anomalies(ens).T @ anomalies(mens) / J


def cov_auto(mens):
    """``(1/J) sum (F_j - F_bar)(F_j - F_bar)^T``, shape ``(m, m)``."""
    e = anomalies(mens)
    return e.T @ e / mens.shape[0]


def cov_param(ens):
    return cov_auto(ens)


def spread_sq(ens):
    """``(1/J) sum |u_j - u_bar|^2``."""
    e = anomalies(ens)
    return float(np.sum(e * e) / ens.shape[0])


def span_basis(ens0, rtol=1e-10):
    """Orthonormal basis (columns) of the linear span of the particles."""
    q, s, _ = np.linalg.svd(np.asarray(ens0, dtype=np.float64).T, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return q[:, :0]
    return q[:, s > rtol * s[0]]


def affine_span_distance(ens0, u, basis=None):
    """Euclidean distance from ``u`` to the linear span of the rows of ``ens0``.

    ``u`` may be a single vector or a stack of vectors (one distance per row).
    Pass a precomputed ``basis`` from :func:`span_basis` when calling repeatedly.
    """
    if basis is None:
        basis = span_basis(ens0)
    u = np.asarray(u, dtype=np.float64)
    resid = u - (u @ basis) @ basis.T
    return np.linalg.norm(resid, axis=-1)
