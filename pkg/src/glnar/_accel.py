"""Optional numba acceleration.

Set ``GLNAR_DISABLE_NUMBA=1`` to force the pure-numpy implementations, e.g.
for debugging or on platforms without numba. The choice is made once at
import time; the numpy path is always importable so both can be compared.
"""
import os

_FLAG = os.environ.get("GLNAR_DISABLE_NUMBA", "").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is optional
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def njit(fn):
    """Compile ``fn`` in nopython mode when numba is installed, else return it."""
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


def backend():
    return "numba" if USE_NUMBA else "numpy"
