"""Debt-based deadline scheduling over unreliable channels: exact distributions, simulation and iterated-logarithm diagnostics."""

from debtsched.kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
