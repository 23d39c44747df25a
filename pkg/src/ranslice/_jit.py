"""Optional numba acceleration for the hot loops.

Kernels are written once as plain loops. When numba is importable and the
environment variable ``RANSLICE_DISABLE_NUMBA`` is unset (or ``0``), they are
compiled with ``numba.njit``; otherwise each kernel module routes calls to
its pure-numpy fallback.
"""

import os

_FLAG = os.environ.get("RANSLICE_DISABLE_NUMBA", "").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_ENABLED = numba is not None and _FLAG in ("", "0", "false", "no")


def njit(fn):
    """Compile ``fn`` in nopython mode, or hand it back unchanged."""
    if numba is None:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)
