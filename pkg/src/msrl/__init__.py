"""Multi-scale self-supervised image embedding in a single Poincare ball."""

__version__ = "0.1.0"
