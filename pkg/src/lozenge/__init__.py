"""Lozenge-tiling surface dynamics: simulation, closed forms and the hydrodynamic PDE."""
__version__ = "0.1.0"
