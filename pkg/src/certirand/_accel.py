"""Kernel backend selection.

Hot loops ship twice: a numba ``@njit`` version and a pure-numpy version.
Set ``CERTIRAND_DISABLE_NUMBA=1`` to force the numpy path (numba is also
skipped automatically when it cannot be imported).
"""
import os

_DISABLED = os.environ.get("CERTIRAND_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:  # pragma: no cover - import guard
    if _DISABLED:
        raise ImportError
    import numba  # noqa: F401
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False
    njit = None

USE_NUMBA = HAVE_NUMBA and not _DISABLED


def jit(fn):
    """Compile ``fn`` with numba when available; otherwise return it unchanged."""
    if not HAVE_NUMBA:
        return fn
    return njit(cache=True, nogil=True)(fn)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
