"""Quasistatic intermittent dynamics: Pomeau-Manneville maps with slowly varying parameters."""

__version__ = "0.1.0"
