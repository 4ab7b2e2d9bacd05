"""Kernel backend selection.

Hot numeric loops (SpMV, triangular substitutions, IC(0) factorization,
coloring/blocking scans) exist twice: a numba @njit build and a pure-numpy
build with identical call signatures.  The default is chosen from the
TRILAB_BACKEND environment variable, re-read on every resolution so the
flag also works when set after import:

    TRILAB_BACKEND=numba   force the jit backend (error if numba is missing)
    TRILAB_BACKEND=numpy   force the pure-numpy fallback
    unset / "auto"         numba if importable, numpy otherwise

Every public entry point that runs a kernel accepts ``kernels=None`` and
resolves it through :func:`get_kernels`, so individual calls can override
the default (the benchmark suite does exactly that).
"""

import os
import warnings

from . import numpy_backend

_ENV_VAR = "TRILAB_BACKEND"
_BACKENDS = {"numpy": numpy_backend}
_NUMBA_FAILED = False


def _load(name):
    global _NUMBA_FAILED
    if name in _BACKENDS:
        return _BACKENDS[name]
    if name == "numba" and not _NUMBA_FAILED:
        try:
            from . import numba_backend
        except ImportError:
            _NUMBA_FAILED = True
        else:
            _BACKENDS["numba"] = numba_backend
            return numba_backend
    if name == "numba":
        raise ValueError("numba backend requested but numba is not importable")
    raise ValueError(
        f"unknown backend {name!r}; available: {available_backends()}"
    )


def available_backends():
    try:
        _load("numba")
    except ValueError:
        pass
    return sorted(_BACKENDS)


def default_backend():
    """Backend name TRILAB_BACKEND currently selects."""
    req = os.environ.get(_ENV_VAR, "auto").strip().lower() or "auto"
    if req == "auto":
        try:
            _load("numba")
            return "numba"
        except ValueError:
            return "numpy"
    if req not in ("numba", "numpy"):
        raise ValueError(
            f"{_ENV_VAR}={req!r}: expected 'numba', 'numpy', or 'auto'"
        )
    return req


def get_kernels(backend=None):
    """Resolve a backend name (or None for the default) to its kernel module."""
    return _load(default_backend() if backend is None else backend)


if (os.environ.get(_ENV_VAR, "auto").strip().lower() or "auto") in ("auto", "numba"):
    try:
        _load("numba")
    except ValueError:
        warnings.warn("numba not importable; falling back to pure-numpy kernels")
