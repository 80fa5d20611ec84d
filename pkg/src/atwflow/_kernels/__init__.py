"""Hot-loop kernels with two interchangeable backends.

The numba backend compiles the distance sweeps and the fused primal-dual
inner loop; the numpy backend implements the same operations with array
arithmetic.  Selection order:

1. an explicit `select_backend(...)` call (used by tests and benchmarks),
2. the environment variable ATWFLOW_KERNELS (``numba``, ``numpy`` or
   ``auto``),
3. ``auto``: numba when importable, numpy otherwise.

Both backends are deterministic run-to-run; they may differ from each
other in the last floating-point digits (different summation shapes).
"""

import os

from . import numpy_impl

_forced = None
_numba_mod = None
_numba_failed = False


def select_backend(name):
    """Force a backend programmatically; returns the previous forced value."""
    global _forced
    if name not in (None, "auto", "numpy", "numba"):
        raise ValueError(f"unknown kernel backend: {name!r}")
    prev = _forced
    _forced = None if name in (None, "auto") else name
    return prev


def _load_numba():
    global _numba_mod, _numba_failed
    if _numba_mod is None and not _numba_failed:
        try:
            from . import numba_impl
            _numba_mod = numba_impl
        except ImportError:
            _numba_failed = True
    return _numba_mod


def backend_name():
    if _forced is not None:
        return _forced
    env = os.environ.get("ATWFLOW_KERNELS", "auto").strip().lower()
    if env in ("numpy", "numba"):
        return env
    if env not in ("", "auto"):
        raise ValueError(f"ATWFLOW_KERNELS must be numba, numpy or auto, not {env!r}")
    return "numba" if _load_numba() is not None else "numpy"


def get_backend():
    name = backend_name()
    if name == "numpy":
        return numpy_impl
    mod = _load_numba()
    if mod is None:
        raise RuntimeError("numba backend requested but numba is not importable")
    return mod


def set_worker_threads(n):
    """Cap numba's thread pool; the numpy backend is single-threaded anyway.

    Requests above the pool size launched at import are clamped, not errors:
    the flag tunes performance and must never change results or exit codes.
    """
    mod = _load_numba()
    if mod is not None:
        import numba

        ceiling = numba.config.NUMBA_NUM_THREADS
        numba.set_num_threads(min(ceiling, max(1, int(n))))
