"""Capacity, error exponents and a two-stage scheme for Gaussian many-access channels."""

__version__ = "0.1.0"
