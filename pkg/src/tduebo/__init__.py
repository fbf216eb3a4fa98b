"""Threshold-driven UCB/EI Bayesian optimization over candidate pools."""

from ._backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
