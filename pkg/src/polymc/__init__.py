"""Lattice directed-polymer partition-function fields and their
Gaussian-fluctuation verification suite."""

__version__ = "0.1.0"

from . import chaos, config, diagnostics, disorder, engine, estimator, \
    oracle, stats, testfunc, walks  # noqa: E402,F401
from .testfunc import TestFunction  # noqa: E402,F401
