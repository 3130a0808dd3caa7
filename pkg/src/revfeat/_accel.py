"""Backend switch for the compiled kernels.

Kernels are written once in a numba-compatible subset and also have a plain
numpy counterpart. Set ``REVFEAT_NO_NUMBA=1`` to force the numpy path (useful
for debugging, coverage, or platforms without llvmlite).
"""
import os

_TRUTHY = {"1", "true", "yes", "on"}

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def numba_enabled():
    """True when compiled kernels should be used."""
    if not HAVE_NUMBA:
        return False
    return os.environ.get("REVFEAT_NO_NUMBA", "").strip().lower() not in _TRUTHY


def njit(func):
    """``numba.njit(cache=True)`` if numba is importable, else ``func``."""
    if HAVE_NUMBA:
        return numba.njit(cache=True, nogil=True)(func)
    return func  # pragma: no cover


def backend_name():
    return "numba" if numba_enabled() else "numpy"
