"""Couplings and Wasserstein contraction for Levy-driven SDEs."""
__version__ = "0.1.0"
