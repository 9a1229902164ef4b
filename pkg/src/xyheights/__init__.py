"""Computational laboratory for the 2D XY model and its dual height function."""

__version__ = "0.1.0"
