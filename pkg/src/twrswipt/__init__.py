"""Rate-energy balanced precoding for SWIPT two-way amplify-and-forward relays."""

from ._backend import NAME as BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
