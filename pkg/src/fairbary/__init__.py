"""Exact demographic-parity regression and classification on finite instances."""

__version__ = "0.1.0"
