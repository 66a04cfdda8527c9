"""Transonic shock solutions of steady isentropic Euler flow with an external force in a 3-D duct."""

__version__ = "0.1.0"
