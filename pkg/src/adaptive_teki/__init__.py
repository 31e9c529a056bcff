"""Stochastic ensemble Kalman inversion with fixed and adaptive Tikhonov regularization."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover - running from a source tree
    __version__ = "0.1.0"

from .gaussian import CovOp, EigenCov, FactorizationError, SeededRng, sample_gaussian
from .kernels import BACKEND
from .teki import AugmentedSystem, NumericalError, Problem

__all__ = ["AugmentedSystem", "BACKEND", "CovOp", "EigenCov", "FactorizationError",
           "NumericalError", "Problem", "SeededRng", "sample_gaussian", "__version__"]
