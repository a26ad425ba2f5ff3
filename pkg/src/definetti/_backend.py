"""Kernel selection: the compiled core when importable, else pure Python.

Set ``DEFINETTI_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _fallback

if os.environ.get("DEFINETTI_PURE_PYTHON", "") not in ("", "0"):
    kernels = _fallback
else:
    try:
        from . import _core as kernels
    except ImportError:  # extension not built
        kernels = _fallback

COMPILED = kernels is not _fallback


def available():
    """Mapping of backend name to kernel module for every importable backend."""
    out = {"python": _fallback}
    try:
        from . import _core
    except ImportError:
        pass
    else:
        out["compiled"] = _core
    return out
