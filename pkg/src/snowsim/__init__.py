"""Simulation toolkit for mobile nodes in a SNOW (Sensor Network Over White spaces) LPWAN."""

__version__ = "0.1.0"
