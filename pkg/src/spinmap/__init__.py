"""Initial-state influence in the spin-boson model from dynamical-map singular values."""

__version__ = "0.1.0"
