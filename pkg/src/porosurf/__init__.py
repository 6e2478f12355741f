"""DeepONet surrogate toolkit for poroelasticity with random permeability fields."""

__version__ = "0.1.0"
