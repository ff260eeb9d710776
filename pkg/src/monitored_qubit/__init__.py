"""Continuously monitored qubit: SDE simulation, deterministic submanifolds,
closed-form state distributions, and Lie-algebraic accessibility analysis."""

__version__ = "0.1.0"
