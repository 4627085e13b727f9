"""Numerical groundstates of the Choquard equation -Delta u + u = (I_alpha * F(u)) f(u)."""

__version__ = "0.1.0"
