"""Finite element Stokes-Biot solver with Nitsche interface coupling and splitting schemes."""

__version__ = "0.1.0"
