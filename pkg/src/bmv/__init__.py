"""Explicit construction and verification of the BMV representing measure."""
