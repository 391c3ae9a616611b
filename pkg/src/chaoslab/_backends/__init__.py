"""Backend dispatch for the hot numeric kernels.

Two implementations share one array-level API: a numba-jitted one and a pure
numpy one.  `CHAOSLAB_BACKEND=numpy|numba` selects the default; without the
variable, numba is used when importable and numpy otherwise.  `get_impl` also
accepts an explicit name so tests and benchmarks can compare both.
"""
from __future__ import annotations

import os
import warnings

_cache: dict = {}


def available() -> "list[str]":
    names = ["numpy"]
    try:
        import numba  # noqa: F401

        names.insert(0, "numba")
    except ImportError:
        pass
    return names


def _load(name: str):
    if name in _cache:
        return _cache[name]
    if name == "numpy":
        from . import numpy_impl as mod
    elif name == "numba":
        from . import numba_impl as mod
    else:
        raise ValueError(f"unknown backend {name!r} (use 'numba' or 'numpy')")
    _cache[name] = mod
    return mod


def default_backend() -> str:
    env = os.environ.get("CHAOSLAB_BACKEND", "").strip().lower()
    if env:
        if env not in ("numba", "numpy"):
            raise ValueError(f"CHAOSLAB_BACKEND={env!r} (use 'numba' or 'numpy')")
        return env
    try:
        import numba  # noqa: F401

        return "numba"
    except ImportError:
        warnings.warn("numba unavailable; falling back to the numpy backend")
        return "numpy"


def get_impl(name: "str | None" = None):
    return _load(name or default_backend())
