"""Numba availability and the switch between compiled and numpy kernels.

Set ``CCAS_DISABLE_NUMBA=1`` to force the pure-numpy path (useful for
debugging, profiling or platforms without numba).
"""

import os

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False


def numba_requested() -> bool:
    flag = os.environ.get("CCAS_DISABLE_NUMBA", "").strip().lower()
    return flag in ("", "0", "false", "no")


USE_NUMBA = HAS_NUMBA and numba_requested()


def njit(fn):
    """Compile ``fn`` in nopython mode, or return it unchanged without numba."""
    if not HAS_NUMBA:
        return fn
    return numba.njit(cache=True, fastmath=False)(fn)
