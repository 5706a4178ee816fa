"""Semiclassical magnetic-well eigenvalue asymptotics and quasimodes in 3D."""

__version__ = "0.1.0"
