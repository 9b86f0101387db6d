"""Neighbourhood decoder and repulsive UDF surface extraction."""

__version__ = "0.1.0"
