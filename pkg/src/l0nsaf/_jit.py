"""Backend selection for the hot loops.

Kernels are written once in numba-compatible numpy. When numba is missing or
``L0NSAF_DISABLE_JIT`` is set to a truthy value, ``njit`` becomes a no-op and
the same source runs as plain numpy.
"""

import os

_FLAG = "L0NSAF_DISABLE_JIT"


def _noop_jit(*args, **kwargs):
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(f):
        return f

    return wrap


def _have_numba():
    try:
        import numba  # noqa: F401

        return True
    except ImportError:
        return False


HAVE_NUMBA = _have_numba()
JIT_DISABLED = os.environ.get(_FLAG, "").strip().lower() in ("1", "true", "yes", "on")
USE_NUMBA = HAVE_NUMBA and not JIT_DISABLED
BACKEND = "numba" if USE_NUMBA else "numpy"

if USE_NUMBA:
    from numba import njit as _numba_njit

    def njit(*args, **kwargs):
        # numba keys the cache on the defining file only; after editing the
        # cores in engine.py, delete __pycache__ so run_stream recompiles
        kwargs.setdefault("cache", True)
        if len(args) == 1 and callable(args[0]):
            return _numba_njit(**kwargs)(args[0])
        return _numba_njit(*args, **kwargs)

else:
    njit = _noop_jit
