"""Conditional independence testing with learned spectral features of the
partial cross-covariance operator."""

__version__ = "0.1.0"
