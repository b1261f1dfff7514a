"""Numerical kernels for the stochastic mass-critical NLS lab."""
