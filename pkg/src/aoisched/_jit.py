"""JIT toggle for the hot numeric kernels.

Kernels are compiled with numba's ``@njit`` by default. Setting the
environment variable ``AOISCHED_NO_NUMBA=1`` (or a missing numba install)
switches every kernel to its plain-Python/numpy fallback, which is handy for
debugging and for benchmarking the two paths against each other.
"""

import os

NUMBA_ENABLED = os.environ.get("AOISCHED_NO_NUMBA", "").lower() not in ("1", "true", "yes")

if NUMBA_ENABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a hard dep, but stay usable
        NUMBA_ENABLED = False

if not NUMBA_ENABLED:

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(f):
            return f

        return wrap
