"""Planar octopus-arm sensorimotor simulator."""

__version__ = "0.1.0"
