"""Conditional flexibility index: learned uncertainty sets and their semi-infinite solvers."""

__version__ = "0.1.0"
