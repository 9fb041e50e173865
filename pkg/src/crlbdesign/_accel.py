"""Backend switch for the compiled kernels.

Numba is used when it imports cleanly and ``CRLBDESIGN_DISABLE_JIT`` is not
set to a truthy value. The selection happens once, at import time, so a
process runs entirely on one backend. Run two processes to compare them
(``crlbdesign bench --backends`` does exactly that).
"""
import os

ENV_FLAG = "CRLBDESIGN_DISABLE_JIT"

_disabled = os.environ.get(ENV_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _disabled:
        raise ImportError
    import numba

    USE_NUMBA = True
except ImportError:
    numba = None
    USE_NUMBA = False

BACKEND = "numba" if USE_NUMBA else "numpy"


def jit(fn):
    """``numba.njit(cache=True)`` when the numba backend is active, identity otherwise."""
    if USE_NUMBA:
        return numba.njit(cache=True)(fn)
    return fn
