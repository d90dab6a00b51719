"""specbench: synthetic 1-D spectra generation and CNN benchmarking."""

from .render import active_backend

__version__ = "0.1.0"
__all__ = ["active_backend", "__version__"]
