"""Thermodynamic formalism toolkit for countable weighted graphs."""
