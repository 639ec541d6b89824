"""Simulator and design toolkit for a delay-tolerant private PoW payment network."""

__version__ = "0.1.0"
