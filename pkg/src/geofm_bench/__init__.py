"""Sensor / label / domain robustness toolkit for landslide segmentation."""

__version__ = "0.1.0"
