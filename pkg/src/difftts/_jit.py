"""Optional numba acceleration.

Set ``DIFFTTS_DISABLE_NUMBA=1`` (or have numba missing) to run every kernel
through its pure-numpy twin. The flag is read once at import time.
"""

import os

_FLAG = os.environ.get("DIFFTTS_DISABLE_NUMBA", "").strip().lower()
DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    if DISABLED:
        raise ImportError
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


def jit(fn=None, **kwargs):
    """``numba.njit`` when available, identity otherwise."""
    kwargs.setdefault("cache", True)

    def wrap(f):
        if not HAVE_NUMBA:
            return f
        return _njit(**kwargs)(f)

    if fn is not None:
        return wrap(fn)
    return wrap
