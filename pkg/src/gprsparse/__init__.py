"""Sparse representation and dictionary learning for impulse-GPR range profiles."""
__version__ = "0.1.0"
