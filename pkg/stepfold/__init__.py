"""Single-fold distillation of diffusion models on low-dimensional data."""

__version__ = "0.1.0"
