"""Boltzmann-Kac particle simulations and quantitative chaos measurements."""

__version__ = "0.1.0"
