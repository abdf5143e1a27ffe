"""JIT switch for the hot kernels.

Kernels are compiled with numba when it is importable and not disabled.
Set ``DTRANS_DISABLE_NUMBA=1`` (or numba's own ``NUMBA_DISABLE_JIT=1``) to
route every kernel through its pure-numpy implementation instead.
"""

import os

_FALSY = ("", "0", "false", "no", "off")


def _flag(name):
    return os.environ.get(name, "").strip().lower() not in _FALSY


try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not (_flag("DTRANS_DISABLE_NUMBA") or _flag("NUMBA_DISABLE_JIT"))


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise an identity decorator.

    Compiled functions default to ``cache=True`` and ``nogil=True`` so that
    replica threads do not serialize on the GIL.
    """
    if not HAVE_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    return numba.njit(*args, **kwargs)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
