"""Kernel backend selection.

The compiled ``_kernels`` extension is used when it imports; otherwise the
numpy ``_fallback``. Set ``TWRSWIPT_BACKEND=python`` to force the fallback.
"""

import importlib
import os

from . import _fallback

BACKENDS = ("cython", "python")


def load(name):
    """Return the kernel module for ``name`` ("cython" or "python")."""
    if name == "python":
        return _fallback
    if name == "cython":
        return importlib.import_module("twrswipt._kernels")
    raise ValueError(f"unknown backend {name!r}; expected one of {BACKENDS}")


def available():
    names = ["python"]
    try:
        load("cython")
    except ImportError:
        pass
    else:
        names.insert(0, "cython")
    return names


def _select():
    wanted = os.environ.get("TWRSWIPT_BACKEND", "").strip().lower()
    if wanted == "python":
        return "python", _fallback
    try:
        return "cython", load("cython")
    except ImportError:
        if wanted == "cython":
            raise
        return "python", _fallback


NAME, kernels = _select()
