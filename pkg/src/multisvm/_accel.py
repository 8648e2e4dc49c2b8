"""JIT switch for the hot numeric kernels.

Kernels are written in the numba-compatible subset of Python/numpy.  When
numba is importable and ``MULTISVM_DISABLE_JIT`` is unset (or ``0``), they are
compiled with ``numba.njit``; otherwise the same functions run as plain
numpy code.  The choice is made once, at import time.
"""
from __future__ import annotations

import functools
import os

__all__ = ["njit", "JIT_ENABLED", "NUMBA_AVAILABLE", "backend_name"]

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - depends on environment
    numba = None
    NUMBA_AVAILABLE = False

_flag = os.environ.get("MULTISVM_DISABLE_JIT", "").strip().lower()
JIT_ENABLED = NUMBA_AVAILABLE and _flag in ("", "0", "false", "no")


def njit(fn=None, **options):
    """``numba.njit`` with ``cache`` and ``nogil`` on, or a no-op fallback.

    In both modes the undecorated function stays reachable as ``py_func``.
    """
    if fn is None:
        return functools.partial(njit, **options)
    if JIT_ENABLED:
        options.setdefault("cache", True)
        options.setdefault("nogil", True)
        return numba.njit(**options)(fn)
    fn.py_func = fn
    return fn


def backend_name() -> str:
    return "numba" if JIT_ENABLED else "numpy"
