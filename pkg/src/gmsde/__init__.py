"""Simulation of multi-valued SDEs driven by G-Brownian motion and
empirical checks of their averaging principle."""

__version__ = "0.1.0"
