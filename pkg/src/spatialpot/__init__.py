"""Spatial power-of-two-choices load balancing: policies, geometry and
experiment drivers."""

__version__ = "0.1.0"
