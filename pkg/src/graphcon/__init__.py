"""Graph-coupled oscillator networks (GraphCON) with a numerical verification suite."""

from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
