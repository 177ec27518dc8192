"""Numba toggle.

Set ``CRANSCHED_DISABLE_NUMBA=1`` to run every kernel as plain Python and
to route the vectorisable kernels through their numpy implementations.
"""
import os

USE_NUMBA = os.environ.get("CRANSCHED_DISABLE_NUMBA", "0").lower() not in ("1", "true", "yes")

if USE_NUMBA:
    try:
        import numba
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

if USE_NUMBA:

    def njit(func):
        return numba.njit(cache=True)(func)

else:

    def njit(func):
        return func
