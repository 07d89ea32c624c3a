"""Optional numba compilation for the hot loops.

Kernels are written once in the numba-compatible subset of Python.  When
numba is importable and ``LOZENGE_NO_NUMBA`` is unset (or ``0``), they are
compiled with ``numba.njit``; otherwise the very same functions run as plain
Python, which is slow but dependency-free and handy for debugging.
"""
import os

_FLAG = "LOZENGE_NO_NUMBA"


def _disabled():
    return os.environ.get(_FLAG, "").strip().lower() not in ("", "0", "false", "no")


try:
    if _disabled():
        raise ImportError("numba disabled by " + _FLAG)
    import numba

    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False


def jit(fn):
    """Compile ``fn`` in nopython mode when numba is active."""
    if HAVE_NUMBA:
        return numba.njit(cache=True)(fn)
    return fn


def python_version_of(fn):
    """Return the uncompiled Python function behind a possibly jitted one."""
    return getattr(fn, "py_func", fn)


def backend_name():
    return "numba-" + numba.__version__ if HAVE_NUMBA else "python"
