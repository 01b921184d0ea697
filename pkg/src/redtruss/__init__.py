"""Redundancy optimization of plane trusses under member damage."""

__version__ = "0.1.0"
