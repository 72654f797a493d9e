"""Stochastic rolling maps on nilpotent Lie groups and their Malliavin derivatives."""

__version__ = "0.1.0"
