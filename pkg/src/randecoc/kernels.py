"""Backend selection for the hot kernels.

The compiled extension is used when importable; setting the environment
variable ``RANDECOC_PURE_PYTHON=1`` forces the numpy fallback. Both backends
produce identical outputs.
"""
import os

import numpy as np

from . import _fallback

try:
    if os.environ.get("RANDECOC_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from . import _native as _impl

    BACKEND = "native"
except ImportError:
    _impl = _fallback
    BACKEND = "python"

_CHUNK = 1 << 22  # elements per kernel call, bounds fallback memory


def backend(name=None):
    """Return the kernel module for ``name`` ('native' or 'python'), default active."""
    if name is None:
        return _impl
    if name == "python":
        return _fallback
    if name == "native":
        from . import _native

        return _native
    raise ValueError(f"unknown backend {name!r}")


def counter_signs(seeds, n_rows, n_cols, impl=None):
    impl = impl or _impl
    seeds = np.ascontiguousarray(np.asarray(seeds, dtype=np.uint64).reshape(-1))
    step = max(1, _CHUNK // max(1, n_rows * n_cols))
    parts = [impl.counter_signs(seeds[i:i + step], n_rows, n_cols) for i in range(0, len(seeds), step)]
    if not parts:
        return np.empty((0, n_rows, n_cols), dtype=np.int8)
    return np.concatenate(parts) if len(parts) > 1 else parts[0]


def _batched(fn, codes, words, impl):
    codes = np.ascontiguousarray(codes, dtype=np.int8)
    words = np.ascontiguousarray(words, dtype=np.int8)
    if codes.ndim == 2:
        codes = codes[None]
    n, m = codes.shape[1], codes.shape[2]
    step = max(1, _CHUNK // max(1, n * m))
    shared = codes.shape[0] == 1
    outs = []
    for i in range(0, words.shape[0], step):
        c = codes if shared else codes[i:i + step]
        outs.append(getattr(impl, fn)(c, words[i:i + step]))
    if not outs:
        shape = (0,) if fn == "nearest" else (0, m)
        empty = np.empty(shape, dtype=np.int64)
        return empty, empty.copy(), empty.copy()
    return tuple(np.concatenate([o[k] for o in outs]) for k in range(3))


def nearest(codes, words, impl=None):
    """Per word: (min Hamming distance, argmin row, number of rows at the min)."""
    return _batched("nearest", codes, words, impl or _impl)


def loo_nearest(codes, words, impl=None):
    """Same as :func:`nearest` with column ``j`` dropped, for every ``j``; shapes (B, M)."""
    return _batched("loo_nearest", codes, words, impl or _impl)
