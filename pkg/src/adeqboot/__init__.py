"""Adequate bootstrap: confidence intervals that stay honest under model misspecification."""

__version__ = "0.1.0"
