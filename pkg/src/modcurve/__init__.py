"""Subgroups of GL2(Z/NZ), modular curve invariants, equation-free point
counting, Jacobian decomposition, and Galois image classification for
elliptic curves over Q."""

__version__ = "0.1.0"
