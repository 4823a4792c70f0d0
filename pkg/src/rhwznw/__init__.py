"""Riemann-Hilbert solving and the regularized WZNW action on the punctured sphere."""

__version__ = "0.1.0"
