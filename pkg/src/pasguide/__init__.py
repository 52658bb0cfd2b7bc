"""Training-free guided diffusion restoration for low-light faces."""

__version__ = "0.1.0"
