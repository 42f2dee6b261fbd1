"""Optional numba acceleration.

Set ``KPGAN_DISABLE_JIT=1`` to run every kernel through its pure-numpy
path.  The same Python source backs both paths, so results agree up to
floating-point reassociation inside numba's ``np.dot``.
"""

import os

_FLAG = os.environ.get("KPGAN_DISABLE_JIT", "").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

JIT_ENABLED = numba is not None and _FLAG not in ("1", "true", "yes", "on")


def maybe_njit(func):
    """Compile ``func`` with ``numba.njit`` unless JIT is disabled."""
    if not JIT_ENABLED:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def jit_compile(func):
    """Always return a compiled version (used by the benchmark)."""
    if numba is None:
        raise RuntimeError("numba is not installed")
    return numba.njit(cache=True, nogil=True)(func)


def set_threads(n):
    """Cap numba's thread pool; ``n <= 0`` leaves the default."""
    if numba is None or n <= 0:
        return
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
