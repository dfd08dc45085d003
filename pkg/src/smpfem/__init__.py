"""Total-Lagrangian electro-thermo-mechanical FE solver for shape memory polymer devices."""

__version__ = "0.1.0"
