"""Risk-sensitive security-constrained economic dispatch."""
__version__ = "0.1.0"
