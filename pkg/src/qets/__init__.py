"""Quantum classifier simulation, qubit-assignment debiasing and energy scaling models."""

__version__ = "0.1.0"
