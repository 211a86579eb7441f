"""Poverty prediction from satellite tiles with a from-scratch MLP."""

__version__ = "0.1.0"
