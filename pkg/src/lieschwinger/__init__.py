"""Lie-Schwinger block-diagonalization of gapped chain Hamiltonians with form-bounded couplings."""

__version__ = "0.1.0"
