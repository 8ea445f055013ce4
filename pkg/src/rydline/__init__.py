"""Laser phase noise, Rydberg chain dynamics and thermalization diagnostics."""

__version__ = "0.1.0"
