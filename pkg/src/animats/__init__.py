"""Evolving Markov-Brain animats in a two-room gate-crossing world."""

__version__ = "0.1.0"
