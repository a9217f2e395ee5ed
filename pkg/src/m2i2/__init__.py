"""Masked selective communication for cooperative multi-agent RL."""

__version__ = "0.1.0"
