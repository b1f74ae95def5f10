"""Optional numba acceleration.

Set ``HEATSHEET_DISABLE_NUMBA=1`` to force the pure-numpy kernels.
"""
import os

_DISABLED = os.environ.get("HEATSHEET_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    import numba

    USE_NUMBA = True
except ImportError:
    numba = None
    USE_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity otherwise."""
    if not USE_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda func: func
    return numba.njit(*args, **kwargs)


def backend():
    return "numba" if USE_NUMBA else "numpy"
