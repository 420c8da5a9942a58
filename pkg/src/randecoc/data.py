"""Datasets: IDX and CSV ingestion, synthetic generators, and relabeling to signs.

Class labels are 0-based indices ``0..N-1``. IDX pixels are scaled from
``0..255`` to ``[0, 1]``; a perturbation budget quoted on the 0-255 scale
converts with :func:`pixels_to_unit` (8 -> 8/255).
"""
from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, FormatError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


def pixels_to_unit(value: float) -> float:
    return value / 255.0


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    feature_range: tuple[float, float] = (0.0, 1.0)
    image_shape: tuple[int, int] | None = None

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64, copy=True)
        y = np.array(self.labels, dtype=np.int64, copy=True)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise DimensionError("features must be (n, d) and labels (n,)")
        if x.shape[0] < 1:
            raise DimensionError("dataset must be non-empty")
        if self.n_classes < 1 or y.min() < 0 or y.max() >= self.n_classes:
            raise DimensionError("labels out of range")
        lo, hi = (float(v) for v in self.feature_range)
        if not lo < hi:
            raise DimensionError("feature_range must satisfy lo < hi")
        if np.isnan(x).any() or x.min() < lo or x.max() > hi:
            raise DimensionError("features outside feature_range")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_range", (lo, hi))

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.n_classes, self.feature_range, self.image_shape)

    def of_class(self, k: int) -> np.ndarray:
        return self.features[self.labels == k]


@dataclass(frozen=True, eq=False)
class RelabelMap:
    signs: np.ndarray

    def __post_init__(self):
        s = np.array(self.signs, dtype=np.int8, copy=True)
        if s.ndim != 1 or not np.all((s == 1) | (s == -1)):
            raise ValueError("relabel map must be a vector of +1/-1")
        s.setflags(write=False)
        object.__setattr__(self, "signs", s)

    def to_json(self) -> str:
        return json.dumps({"signs": self.signs.astype(int).tolist()})

    @classmethod
    def from_json(cls, s: str) -> "RelabelMap":
        return cls(np.asarray(json.loads(s)["signs"]))


def relabel(data: Dataset, mapping) -> tuple[np.ndarray, np.ndarray]:
    """Binary-labeled view ``(features, signs[labels])`` in the original order."""
    signs = mapping.signs if isinstance(mapping, RelabelMap) else RelabelMap(mapping).signs
    if signs.shape[0] != data.n_classes:
        raise DimensionError(f"map has {signs.shape[0]} entries for {data.n_classes} classes")
    return data.features, signs[data.labels].astype(np.float64)


# -- IDX --------------------------------------------------------------------

def _read_idx(path, magic: int, ndim: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{path}: truncated header")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise FormatError(f"{path}: bad magic 0x{found:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = int(np.prod(dims))
    if len(raw) - header != size:
        raise FormatError(f"{path}: expected {size} data bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(images_path, labels_path, n_classes: int | None = None) -> Dataset:
    images = _read_idx(images_path, IMAGE_MAGIC, 3)
    labels = _read_idx(labels_path, LABEL_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"count mismatch: {images.shape[0]} images, {labels.shape[0]} labels")
    n = images.shape[0]
    if n_classes is None:
        n_classes = int(labels.max()) + 1 if n else 1
    x = images.reshape(n, -1).astype(np.float64) / 255.0
    return Dataset(x, labels.astype(np.int64), n_classes, (0.0, 1.0), tuple(images.shape[1:]))


def write_idx(data: Dataset, images_path, labels_path, shape: tuple[int, int] | None = None) -> None:
    """Inverse of :func:`load_idx` for datasets whose pixels are multiples of 1/255."""
    n, d = data.features.shape
    shape = shape or data.image_shape
    if shape is None:
        side = int(round(d ** 0.5))
        shape = (side, side) if side * side == d else (d, 1)
    rows, cols = shape
    if rows * cols != d:
        raise DimensionError(f"shape {rows}x{cols} does not match dimension {d}")
    pix = np.rint(data.features * 255.0)
    if pix.min() < 0 or pix.max() > 255:
        raise FormatError("features are not in [0, 1]")
    if data.labels.max() > 255:
        raise FormatError("labels do not fit in a byte")
    Path(images_path).write_bytes(struct.pack(">4I", IMAGE_MAGIC, n, rows, cols) + pix.astype(np.uint8).tobytes())
    Path(labels_path).write_bytes(struct.pack(">2I", LABEL_MAGIC, n) + data.labels.astype(np.uint8).tobytes())


# -- CSV --------------------------------------------------------------------

def write_csv(data: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y"] + [f"x{i + 1}" for i in range(data.dim)])
        for y, x in zip(data.labels, data.features):
            w.writerow([int(y)] + [repr(float(v)) for v in x])


def load_csv(path, n_classes: int | None = None, feature_range=None) -> Dataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    d = len(header) - 1
    if d < 1 or header != ["y"] + [f"x{i + 1}" for i in range(d)]:
        raise FormatError(f"{path}: header must be y,x1,...,xd")
    try:
        y = np.array([int(r[0]) for r in body], dtype=np.int64)
        x = np.array([[float(v) for v in r[1:]] for r in body], dtype=np.float64).reshape(len(body), d)
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if n_classes is None:
        n_classes = int(y.max()) + 1
    if feature_range is None:
        feature_range = (float(x.min()), float(x.max()))
        if feature_range[0] == feature_range[1]:
            feature_range = (feature_range[0] - 1.0, feature_range[1] + 1.0)
    return Dataset(x, y, n_classes, tuple(feature_range))


# -- synthetic ----------------------------------------------------------------

def class_centers(n_classes: int, dim: int, separation: float) -> np.ndarray:
    """Deterministic centers with pairwise distance >= ``separation``.

    With ``n_classes <= dim`` the centers are scaled basis vectors, which are
    affinely independent, so every two-colouring of the classes is linearly
    separable. Otherwise a cubic lattice with spacing ``separation`` is used.
    """
    if n_classes <= dim:
        c = np.zeros((n_classes, dim))
        c[np.arange(n_classes), np.arange(n_classes)] = separation / np.sqrt(2.0)
        return c
    side = int(np.ceil(n_classes ** (1.0 / dim)))
    while side ** dim < n_classes:
        side += 1
    grid = np.array(np.unravel_index(np.arange(n_classes), (side,) * dim)).T
    return grid * float(separation)


def synth_gaussian(n_classes: int, dim: int, per_class: int, separation: float, seed: int,
                   feature_range: tuple[float, float] | None = None) -> Dataset:
    """Isotropic unit-variance Gaussian blobs around :func:`class_centers`."""
    if min(n_classes, dim, per_class) < 1 or separation <= 0:
        raise DimensionError("n_classes, dim, per_class and separation must be positive")
    centers = class_centers(n_classes, dim, separation)
    if feature_range is None:
        feature_range = (float(centers.min()) - 4.0, float(centers.max()) + 4.0)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF]))
    x = np.repeat(centers, per_class, axis=0) + rng.standard_normal((n_classes * per_class, dim))
    y = np.repeat(np.arange(n_classes), per_class)
    return Dataset(np.clip(x, *feature_range), y, n_classes, feature_range)


def synth_symmetric(n_classes: int, per_class: int, separation: float, seed: int,
                    feature_range: tuple[float, float] | None = None) -> Dataset:
    """Blobs whose classes are exact coordinate rotations of class 0.

    Features live in ``R^n_classes``; class ``k`` is class 0 with coordinates
    rolled by ``k``, so shifting every class index by one and rolling the
    features by one maps the dataset onto itself.
    """
    if min(n_classes, per_class) < 1 or separation <= 0:
        raise DimensionError("n_classes, per_class and separation must be positive")
    c0 = np.zeros(n_classes)
    c0[0] = separation / np.sqrt(2.0)
    if feature_range is None:
        feature_range = (-4.0, float(c0[0]) + 4.0)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF]))
    base = np.clip(c0 + rng.standard_normal((per_class, n_classes)), *feature_range)
    x = np.concatenate([np.roll(base, k, axis=1) for k in range(n_classes)])
    y = np.repeat(np.arange(n_classes), per_class)
    return Dataset(x, y, n_classes, feature_range)
