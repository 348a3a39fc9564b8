"""Extreme event propagation: peaks-over-threshold margins, stationary vine
copulas and probabilities of causation for linear impact events."""

__version__ = "0.1.0"
