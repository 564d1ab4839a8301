"""Optional numba acceleration.

Set ``BFSTAB_DISABLE_NUMBA=1`` to force the numpy/LAPACK reference kernels even
when numba is importable.
"""

import os

_DISABLED = os.environ.get("BFSTAB_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    import numba as _numba
except ImportError:  # pragma: no cover
    _numba = None

HAS_NUMBA = _numba is not None
USE_NUMBA = HAS_NUMBA and not _DISABLED


def jit(*args, **kwargs):
    """``numba.jit`` when numba is active, otherwise an identity decorator."""
    if USE_NUMBA:
        return _numba.jit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def _wrapper(func):
        return func

    return _wrapper
