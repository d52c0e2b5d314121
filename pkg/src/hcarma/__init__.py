"""Hilbert-space valued CARMA processes: companion operators, semigroups, simulation and discretization."""

__version__ = "0.1.0"
