"""Optional numba acceleration.

Set ``TUNET_NUMBA=0`` in the environment before import to force the pure
numpy code paths. If numba cannot be imported the numpy paths are used too.
"""
import os

_flag = os.environ.get("TUNET_NUMBA", "1").strip().lower()

USE_NUMBA = _flag not in ("0", "false", "no", "off")

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False

if not USE_NUMBA:

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
