"""Tactile-reactive canopy navigation: controllers, plant simulation, harness."""

from .kernels import backend_name

__version__ = "0.1.0"
__all__ = ["backend_name", "__version__"]
