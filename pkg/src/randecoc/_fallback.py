"""Pure-numpy versions of the compiled kernels in ``_native.pyx``."""
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)


def _mix(z):
    z = z ^ (z >> np.uint64(30))
    z = z * _C1
    z = z ^ (z >> np.uint64(27))
    z = z * _C2
    return z ^ (z >> np.uint64(31))


def _derive(key, index):
    return _mix(key ^ _mix(index + GOLDEN))


def counter_signs(seeds, n_rows, n_cols):
    seeds = np.ascontiguousarray(seeds, dtype=np.uint64)
    with np.errstate(over="ignore"):
        root = _mix(seeds)[:, None, None]
        rows = np.arange(n_rows, dtype=np.uint64)[None, :, None]
        cols = np.arange(n_cols, dtype=np.uint64)[None, None, :]
        bits = _derive(_derive(root, rows), cols) >> np.uint64(63)
    return np.where(bits == 1, -1, 1).astype(np.int8)


def _check(codes, words):
    if codes.shape[0] not in (1, words.shape[0]):
        raise ValueError("codes batch does not match words batch")
    if words.shape[1] != codes.shape[2]:
        raise ValueError("codeword length mismatch")


def nearest(codes, words):
    _check(codes, words)
    d = (codes != words[:, None, :]).sum(axis=2, dtype=np.int64)
    best = d.min(axis=1)
    label = d.argmin(axis=1).astype(np.int64)
    ties = (d == best[:, None]).sum(axis=1, dtype=np.int64)
    return best, label, ties


def loo_nearest(codes, words):
    _check(codes, words)
    mismatch = codes != words[:, None, :]
    full = mismatch.sum(axis=2, dtype=np.int64)
    d = full[:, :, None] - mismatch
    best = d.min(axis=1)
    label = d.argmin(axis=1).astype(np.int64)
    ties = (d == best[:, None, :]).sum(axis=1, dtype=np.int64)
    return best, label, ties
