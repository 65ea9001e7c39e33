"""Synthetic SRS beam-space testbed for location and heading based UE grouping."""

__version__ = "0.1.0"
