"""Functional, link-budget and performance models of photonic XNOR-bitcount BNN accelerators."""

__version__ = "0.1.0"
