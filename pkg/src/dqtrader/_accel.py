"""Optional numba acceleration.

Set ``DQTRADER_NUMBA=0`` to force the pure-numpy kernels even when numba is
importable. The flag is read once, at import time.
"""
import os

_FLAG = os.environ.get("DQTRADER_NUMBA", "1").strip().lower()

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    _numba = None

NUMBA_AVAILABLE = _numba is not None
USE_NUMBA = NUMBA_AVAILABLE and _FLAG not in ("0", "false", "no", "off")


def njit(fn):
    """``numba.njit(cache=False)`` when numba is importable, identity otherwise."""
    if _numba is None:
        return fn
    return _numba.njit(cache=False)(fn)
