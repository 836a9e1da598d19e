"""Differentially private training that couples public and private gradients."""

__version__ = "0.1.0"
