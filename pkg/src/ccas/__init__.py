"""Collaborative collision avoidance for inland ships: priority protocol and
distributed model predictive control."""

from ccas.kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
