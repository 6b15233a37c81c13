"""Predict-and-optimize robust unit commitment with calibrated uncertainty sets."""

__version__ = "0.1.0"
