"""Boundary-integral study of Dirac points and interface modes in an
obstacle-lined acoustic waveguide."""

__version__ = "0.1.0"
