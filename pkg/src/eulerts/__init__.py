"""Euler-scheme time-series generators trained against Wasserstein-type losses."""

__version__ = "0.1.0"
