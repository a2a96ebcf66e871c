"""Prepaid likelihood-free estimation: build a simulation database once, answer
parameter-estimation queries in seconds."""

__version__ = "0.1.0"
