"""Favorite sites of simple random walks: simulation, exact oracles and analytics."""

__version__ = "0.1.0"
