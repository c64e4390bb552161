"""Gamma frailty models for bivariate current status data with competing risks."""

__version__ = "0.1.0"
