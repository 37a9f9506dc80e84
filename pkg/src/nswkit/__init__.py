"""Weighted Nash social welfare toolkit: configuration LP, rounding, gap instances and verifier."""
__version__ = "0.1.0"
SPEC_VERSION = "1.0"
