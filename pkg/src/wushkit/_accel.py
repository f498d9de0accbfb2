"""Backend selection for the hot kernels.

Every performance-sensitive inner loop in this package exists twice: a
numba ``@njit`` version and a vectorized pure-numpy version with the same
signature and semantics.  Which one runs is decided by the ``WUSHKIT_BACKEND``
environment variable (read once at import):

* ``auto`` (default) - numba if importable, numpy otherwise
* ``numba``          - require numba, fail loudly if missing
* ``numpy``          - force the pure-numpy fallbacks

``set_backend()`` switches at runtime; the benchmark script uses it to time
both paths in one process.  Kernel modules register their pairs through
``dispatch()`` and look the active one up per call, so switching is cheap
and affects subsequent calls immediately.
"""

from __future__ import annotations

import os

try:
    import numba as _nb

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only on numba-less installs
    _nb = None
    HAS_NUMBA = False

_VALID = ("auto", "numba", "numpy")


def _from_env() -> str:
    raw = os.environ.get("WUSHKIT_BACKEND", "auto").strip().lower()
    if raw not in _VALID:
        raise ValueError(
            f"WUSHKIT_BACKEND must be one of {_VALID}, got {raw!r}"
        )
    if raw == "numba" and not HAS_NUMBA:
        raise ImportError("WUSHKIT_BACKEND=numba but numba is not importable")
    return raw


_mode = _from_env()


def use_numba() -> bool:
    """True when jitted kernels should run."""
    if _mode == "numba":
        return True
    if _mode == "numpy":
        return False
    return HAS_NUMBA


def set_backend(mode: str) -> None:
    """Select ``auto``, ``numba`` or ``numpy`` for subsequent kernel calls."""
    global _mode
    if mode not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}, got {mode!r}")
    if mode == "numba" and not HAS_NUMBA:
        raise ImportError("numba backend requested but numba is not importable")
    _mode = mode


def get_backend() -> str:
    """The active mode string (``auto`` resolves to what it picked)."""
    if _mode == "auto":
        return "numba" if HAS_NUMBA else "numpy"
    return _mode


def jit(func):
    """Compile ``func`` with numba when available, else return ``None``.

    nopython mode, cached to disk so test sessions pay the compile cost once.
    """
    if not HAS_NUMBA:
        return None
    return _nb.njit(cache=True)(func)


def dispatch(numpy_impl, numba_impl):
    """Return a callable picking the active implementation per call."""

    if numba_impl is None:
        return lambda *a, **k: numpy_impl(*a, **k)

    def _dispatched(*args, **kwargs):
        if use_numba():
            return numba_impl(*args, **kwargs)
        return numpy_impl(*args, **kwargs)

    return _dispatched
