"""Finite-resolution toolkit for quotients of the shift on the remainder of beta-omega."""

__version__ = "0.1.0"
