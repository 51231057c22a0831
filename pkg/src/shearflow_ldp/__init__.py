"""Quenched large deviations for Brownian motion in a random shear flow."""

__version__ = "0.1.0"
