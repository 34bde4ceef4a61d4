"""Seated full-body pose estimation from pressure maps via motion tokens."""

__version__ = "0.1.0"
