"""Truncated Fock-space engine for EPR steering, Bell inequalities,
macroscopic superposition witnesses and hidden-variable models."""

__version__ = "0.1.0"
