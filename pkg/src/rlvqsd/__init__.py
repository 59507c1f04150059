"""Reinforcement-learning architecture search for variational quantum state diagonalisation."""

__version__ = "0.1.0"
