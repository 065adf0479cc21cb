"""Numerical laboratory for contractive Markov systems."""

__version__ = "0.1.0"
