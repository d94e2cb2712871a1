"""Federated partial-layer training simulator."""
__version__ = "0.1.0"
