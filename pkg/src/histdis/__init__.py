"""Differentiable feature-histogram disentanglement on a toy scene generator."""

__version__ = "0.1.0"
