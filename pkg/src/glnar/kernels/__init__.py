"""Hot loops with interchangeable numba and numpy backends.

The active backend follows ``GLNAR_DISABLE_NUMBA`` (see :mod:`glnar._accel`);
``get(name, backend)`` fetches a specific implementation for comparisons.
"""
from .._accel import USE_NUMBA, backend
from . import numpy_impl

if USE_NUMBA:
    from . import numba_impl as _active
else:
    _active = numpy_impl

ar_filter = _active.ar_filter
glnar_recursion = _active.glnar_recursion
rls_recursion = _active.rls_recursion

# single-observation updates always use the numpy path
glnar_step = numpy_impl.glnar_step
glnar_score = numpy_impl.glnar_score
rls_step = numpy_impl.rls_step
solve_spd = numpy_impl.solve_spd


def get(name, which=None):
    which = which or backend()
    if which == "numba":
        from . import numba_impl

        return getattr(numba_impl, name)
    if which == "numpy":
        return getattr(numpy_impl, name)
    raise ValueError(f"unknown backend {which!r}")
