"""Knotted wires, their Biot-Savart fields and hyperbolic periodic field lines."""

__version__ = "0.1.0"
