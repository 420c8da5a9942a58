"""Random code matrices and Hamming decoding with abstention.

Entries of a code matrix are generated by a counter-based hash so the sign at
``(i, j)`` depends only on ``(seed, i, j)``:

    root  = mix(seed)
    key_i = mix(root  ^ mix(i + GOLDEN))
    e_ij  = mix(key_i ^ mix(j + GOLDEN))
    Z_ij  = -1 if the top bit of e_ij is set else +1

``mix`` is the SplitMix64 finalizer and ``GOLDEN = 0x9E3779B97F4A7C15``; all
arithmetic is modulo 2**64. The same derivation (:func:`derive_seed`) gives
per-trial and per-column seeds elsewhere in the package.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

import numpy as np

from . import kernels
from .errors import DimensionError

ABSTAIN = -1
MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class RowCollisionWarning(UserWarning):
    pass


def _mix(z: int) -> int:
    z &= MASK64
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *indices: int) -> int:
    """Derive an independent 64-bit seed for the stream indexed by ``indices``."""
    key = _mix(seed)
    for i in indices:
        key = _mix(key ^ _mix((i + _GOLDEN) & MASK64))
    return key


def as_rational(r) -> Fraction:
    """Exact rational for a threshold; floats go through their shortest repr."""
    if isinstance(r, Fraction):
        return r
    if isinstance(r, Rational):
        return Fraction(r)
    if isinstance(r, str):
        return Fraction(r)
    if isinstance(r, float) and not math.isfinite(r):
        raise ValueError(f"threshold must be finite, got {r}")
    return Fraction(repr(float(r)))


def max_accepted_distance(code_length: int, r) -> int:
    """Largest integer d with d < code_length * r (may be negative)."""
    q = code_length * as_rational(r)
    return math.ceil(q) - 1


@dataclass(frozen=True, eq=False)
class CodeMatrix:
    """Hidden sign matrix; row ``y`` is the codeword of class ``y``."""

    entries: np.ndarray
    seed: int

    def __post_init__(self):
        e = np.array(self.entries, dtype=np.int8, copy=True)
        if e.ndim != 2:
            raise DimensionError("code matrix must be two-dimensional")
        if not np.all((e == 1) | (e == -1)):
            raise ValueError("code matrix entries must be +1 or -1")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def n_classes(self) -> int:
        return self.entries.shape[0]

    @property
    def code_length(self) -> int:
        return self.entries.shape[1]

    def column(self, j: int) -> np.ndarray:
        return self.entries[:, j]

    def without_column(self, j: int) -> "CodeMatrix":
        return CodeMatrix(np.delete(self.entries, j, axis=1), self.seed)

    def with_column_negated(self, j: int) -> "CodeMatrix":
        e = self.entries.copy()
        e[:, j] *= -1
        return CodeMatrix(e, self.seed)

    def duplicate_rows(self) -> list[tuple[int, int]]:
        seen: dict[bytes, int] = {}
        dups = []
        for i, row in enumerate(self.entries):
            key = row.tobytes()
            if key in seen:
                dups.append((seen[key], i))
            else:
                seen[key] = i
        return dups

    def __eq__(self, other):
        if not isinstance(other, CodeMatrix):
            return NotImplemented
        return self.seed == other.seed and np.array_equal(self.entries, other.entries)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_classes": self.n_classes,
            "code_length": self.code_length,
            "rows": self.entries.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CodeMatrix":
        code = cls(np.asarray(d["rows"], dtype=np.int8), int(d["seed"]))
        if code.n_classes != d["n_classes"] or code.code_length != d["code_length"]:
            raise DimensionError("declared dimensions do not match rows")
        return code

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "CodeMatrix":
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True)
class DecodeResult:
    label: int  # ABSTAIN when abstained
    distance: int
    abstained: bool


def sample_code(n_classes: int, code_length: int, seed: int, resample_collisions: bool = False) -> CodeMatrix:
    """Sample an ``n_classes x code_length`` matrix of independent fair signs.

    Duplicate rows are reported with :class:`RowCollisionWarning` and kept
    unless ``resample_collisions`` is set, in which case the seed is advanced
    via :func:`derive_seed` until the rows are distinct.
    """
    if n_classes < 2 or code_length < 1:
        raise DimensionError(f"need n_classes >= 2 and code_length >= 1, got ({n_classes}, {code_length})")
    seed = int(seed) & MASK64
    attempt = 0
    current = seed
    while True:
        entries = kernels.counter_signs(np.array([current], dtype=np.uint64), n_classes, code_length)[0]
        code = CodeMatrix(entries, current)
        dups = code.duplicate_rows()
        if not dups:
            return code
        if not resample_collisions:
            warnings.warn(f"code matrix has duplicate rows {dups}", RowCollisionWarning, stacklevel=2)
            return code
        attempt += 1
        if attempt > 1000 or n_classes > 2 ** code_length:
            raise DimensionError("cannot draw distinct rows for these dimensions")
        current = derive_seed(seed, attempt)


def sample_codes(n_classes: int, code_length: int, seeds) -> np.ndarray:
    """Entries of ``sample_code(n_classes, code_length, s)`` for every seed, stacked."""
    seeds = np.asarray([int(s) & MASK64 for s in seeds], dtype=np.uint64)
    return kernels.counter_signs(seeds, n_classes, code_length)


def _as_word(a) -> np.ndarray:
    w = np.asarray(a)
    if w.ndim != 1:
        raise DimensionError("codeword must be one-dimensional")
    return w


def hamming(a, b) -> int:
    a, b = _as_word(a), _as_word(b)
    if a.shape != b.shape:
        raise DimensionError(f"codeword lengths differ: {a.shape[0]} vs {b.shape[0]}")
    return int(np.count_nonzero(a != b))


def decode_batch(code, words, r, no_abstain: bool = False):
    """Vectorised decode. Returns ``(labels, distances)``; abstentions are ``ABSTAIN``.

    ``code`` is a CodeMatrix, an (N, M) array, or a (B, N, M) stack with one
    matrix per word. Ties at the minimum abstain; with ``no_abstain`` the
    threshold is ignored and ties go to the lowest class index.
    """
    entries = code.entries if isinstance(code, CodeMatrix) else np.asarray(code, dtype=np.int8)
    words = np.atleast_2d(np.asarray(words, dtype=np.int8))
    m = entries.shape[-1]
    if words.shape[1] != m:
        raise DimensionError(f"codeword length {words.shape[1]} != code length {m}")
    dist, label, ties = kernels.nearest(entries, words)
    if no_abstain:
        return label, dist
    accept = (ties == 1) & (dist <= max_accepted_distance(m, r))
    return np.where(accept, label, ABSTAIN), dist


def decode(code: CodeMatrix, predicted, r) -> DecodeResult:
    """Nearest-row decoding; abstains on ties or when the distance is not below ``M * r``."""
    w = _as_word(predicted)
    labels, dist = decode_batch(code, w[None, :], r)
    label = int(labels[0])
    return DecodeResult(label, int(dist[0]), label == ABSTAIN)


def decode_leave_one_out_batch(code, words, r, no_abstain: bool = False):
    """Decode every word with each column dropped in turn; returns (B, M) labels.

    The threshold stays at ``M * r`` with the full length ``M``. With ``M = 1``
    the empty vote ties every row and abstains.
    """
    entries = code.entries if isinstance(code, CodeMatrix) else np.asarray(code, dtype=np.int8)
    words = np.atleast_2d(np.asarray(words, dtype=np.int8))
    m = entries.shape[-1]
    if words.shape[1] != m:
        raise DimensionError(f"codeword length {words.shape[1]} != code length {m}")
    dist, label, ties = kernels.loo_nearest(entries, words)
    if no_abstain:
        return label, dist
    accept = (ties == 1) & (dist <= max_accepted_distance(m, r))
    return np.where(accept, label, ABSTAIN), dist
