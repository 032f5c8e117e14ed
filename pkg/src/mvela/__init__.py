"""Landscape features and automated algorithm selection for mixed-variable
black-box optimization."""

__version__ = "0.1.0"
