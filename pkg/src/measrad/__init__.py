"""Measurement-conditioned radiation of charged spin-1/2 particles."""

__version__ = "0.1.0"
