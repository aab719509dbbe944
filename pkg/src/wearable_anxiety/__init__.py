"""Anxiety-level regression from wearable physiological signals."""

__version__ = "0.1.0"
