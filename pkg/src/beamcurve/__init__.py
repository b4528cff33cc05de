"""Faint curved edge detection with the beam-curve binary tree."""

__version__ = "0.1.0"
