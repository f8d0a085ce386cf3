"""Segmentation-histogram row following for row-based crops, with a closed-loop simulator."""

__version__ = "0.1.0"
