"""Multi-fidelity ship motion pipeline."""

__version__ = "0.1.0"
