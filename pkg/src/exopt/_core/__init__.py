"""Kernel backend selection.

The compiled Cython module is preferred when importable; the numpy twin is
the fallback. `EXOPT_BACKEND=python` or `EXOPT_BACKEND=compiled` forces the
choice (forcing `compiled` raises if the extension is missing).
"""

import os

_requested = os.environ.get("EXOPT_BACKEND", "").strip().lower()

if _requested in ("python", "numpy", "pure"):
    from . import _pykern as _impl

    BACKEND = "python"
elif _requested in ("", "compiled", "fast", "cython"):
    try:
        from . import _fastkern as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        if _requested:
            raise
        from . import _pykern as _impl

        BACKEND = "python"
else:
    raise ImportError(f"unknown EXOPT_BACKEND value: {_requested!r}")

besseli_log = _impl.besseli_log
h_block = _impl.h_block

__all__ = ["BACKEND", "besseli_log", "h_block"]
