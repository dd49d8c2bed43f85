"""Cavity-QED mediated quantum state transfer networks."""
