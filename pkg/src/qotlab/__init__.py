"""Simulated BB84 commitment and oblivious-transfer stack with numerical labs."""
__version__ = "0.1.0"
