"""Symbolic-numeric symmetry analysis for Brownian-motion-driven SDEs."""

__version__ = "0.1.0"
