"""Backend selection for the hot kernels.

Every kernel in this package has two implementations: a numba ``@njit`` loop
and a vectorised numpy path.  The numba path is used when numba imports and
``TWOPHASE_BACKEND`` is not set to ``numpy``.  Both paths must produce the
same numbers (bit-identical for the transforms, which use the same operation
order), so switching backends never changes results.
"""

import os

_ENV_VAR = "TWOPHASE_BACKEND"


def _noop_jit(*args, **kwargs):
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(f):
        return f

    return wrap


try:
    import numba  # noqa: F401
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = _noop_jit
    HAVE_NUMBA = False


def _initial_backend():
    requested = os.environ.get(_ENV_VAR, "").strip().lower()
    if requested in ("", "auto", "numba"):
        return "numba" if HAVE_NUMBA else "numpy"
    if requested == "numpy":
        return "numpy"
    raise ValueError(f"{_ENV_VAR} must be 'numba', 'numpy' or 'auto', got {requested!r}")


_backend = _initial_backend()


def get_backend():
    return _backend


def set_backend(name):
    """Switch backend at runtime (used by the benchmark and tests)."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


def use_numba():
    return _backend == "numba"
