"""Random code ensembles: one relabeled binary classifier per code column."""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .codebook import (
    ABSTAIN,
    CodeMatrix,
    DecodeResult,
    as_rational,
    decode_batch,
    decode_leave_one_out_batch,
    derive_seed,
    sample_code,
)
from .data import Dataset, relabel
from .errors import DimensionError
from .learners import BinaryClassifier, TrainConfig, train_binary


class ColumnTrainer:
    """Train the classifier for a code column, memoising RNG-free learners.

    Logistic training uses no randomness and is exactly sign-equivariant, so a
    column and its negation share one training run: the classifier is trained
    on the canonical orientation (first entry +1) and negated when needed.
    MLP columns get their own init seed derived from ``(seed, j)`` and are
    never shared.
    """

    def __init__(self, data: Dataset, config: TrainConfig, seed: int = 0, cache: bool = True):
        self.data = data
        self.config = config
        self.seed = seed
        self.cache = cache and config.kind == "logistic"
        self._memo: dict[bytes, BinaryClassifier] = {}
        self.trainings = 0

    def column_config(self, j: int) -> TrainConfig:
        return self.config.replace(seed=derive_seed(self.seed, j) >> 1)

    def _fit(self, column, j):
        X, z = relabel(self.data, column)
        self.trainings += 1
        return train_binary(X, z, self.column_config(j))

    def train(self, column, j: int = 0) -> BinaryClassifier:
        column = np.asarray(column, dtype=np.int8)
        if column.shape != (self.data.n_classes,):
            raise DimensionError("column length must equal the number of classes")
        if not self.cache:
            return self._fit(column, j)
        flip = column[0] < 0
        canon = -column if flip else column
        key = canon.tobytes()
        f = self._memo.get(key)
        if f is None:
            f = self._memo[key] = self._fit(canon, j)
        return f.negated() if flip else f


@dataclass(frozen=True, eq=False)
class Ensemble:
    code: CodeMatrix
    classifiers: tuple
    r: object
    train_config: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "classifiers", tuple(self.classifiers))
        if len(self.classifiers) != self.code.code_length:
            raise DimensionError("one classifier per code column is required")
        rq = as_rational(self.r)
        if not 0 <= rq <= 1:
            raise ValueError("threshold r must lie in [0, 1]")

    @property
    def n_classes(self) -> int:
        return self.code.n_classes

    @property
    def code_length(self) -> int:
        return self.code.code_length

    @property
    def input_dim(self) -> int:
        return self.classifiers[0].input_dim

    def with_r(self, r) -> "Ensemble":
        return Ensemble(self.code, self.classifiers, r, self.train_config, self.seed)

    def predict_codewords(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.input_dim:
            raise DimensionError(f"expected dimension {self.input_dim}, got {X.shape[1]}")
        return np.stack([f.predict(X) for f in self.classifiers], axis=1).astype(np.int8)

    def predict_codeword(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1:
            raise DimensionError("expected a single feature vector")
        return self.predict_codewords(x[None, :])[0]

    def classify_batch(self, X, no_abstain: bool = False, r=None) -> np.ndarray:
        words = self.predict_codewords(X)
        return decode_batch(self.code, words, self.r if r is None else r, no_abstain=no_abstain)[0]

    def classify(self, x, no_abstain: bool = False) -> DecodeResult:
        words = self.predict_codeword(x)[None, :]
        labels, dist = decode_batch(self.code, words, self.r, no_abstain=no_abstain)
        label = int(labels[0])
        return DecodeResult(label, int(dist[0]), label == ABSTAIN)

    def classify_leave_one_out(self, x, j: int) -> DecodeResult:
        """Decode without column ``j`` (0-based), still thresholding at ``M * r``."""
        if not 0 <= j < self.code_length:
            raise IndexError(f"column {j} out of range 0..{self.code_length - 1}")
        words = self.predict_codeword(x)[None, :]
        labels, dist = decode_leave_one_out_batch(self.code, words, self.r)
        label = int(labels[0, j])
        return DecodeResult(label, int(dist[0, j]), label == ABSTAIN)

    def to_dict(self) -> dict:
        return {
            "code": self.code.to_dict(),
            "r": str(as_rational(self.r)),
            "seed": self.seed,
            "train_config": self.train_config.to_dict(),
            "classifiers": [f.to_dict() for f in self.classifiers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Ensemble":
        return cls(
            CodeMatrix.from_dict(d["code"]),
            [BinaryClassifier.from_dict(c) for c in d["classifiers"]],
            as_rational(d["r"]),
            TrainConfig(**d["train_config"]),
            d["seed"],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "Ensemble":
        return cls.from_dict(json.loads(s))


def ensemble_from_code(data: Dataset, code: CodeMatrix, r, config: TrainConfig, seed: int = 0,
                       trainer: ColumnTrainer | None = None, n_jobs: int = 1) -> Ensemble:
    if code.n_classes != data.n_classes:
        raise DimensionError("code rows must match the number of classes")
    trainer = trainer or ColumnTrainer(data, config, seed)
    cols = range(code.code_length)
    if n_jobs > 1 and not trainer.cache:
        with ThreadPoolExecutor(n_jobs) as pool:
            classifiers = list(pool.map(lambda j: trainer.train(code.column(j), j), cols))
    else:
        classifiers = [trainer.train(code.column(j), j) for j in cols]
    return Ensemble(code, classifiers, r, config, seed)


def build_ensemble(data: Dataset, code_length: int, r, seed: int, config: TrainConfig | None = None,
                   n_classes: int | None = None, n_jobs: int = 1, resample_collisions: bool = False,
                   trainer: ColumnTrainer | None = None) -> Ensemble:
    """Sample a code from ``seed`` and train one classifier per column.

    Column ``j`` trains with an init seed derived from ``(seed, j)``, so the
    result does not depend on ``n_jobs``.
    """
    if n_classes is not None and n_classes != data.n_classes:
        raise DimensionError("n_classes does not match the dataset")
    if code_length < 1:
        raise DimensionError("code_length must be >= 1")
    rq = as_rational(r)
    if not 0 < rq < 1:
        raise ValueError("threshold r must lie in (0, 1)")
    config = config or TrainConfig()
    code = sample_code(data.n_classes, code_length, seed, resample_collisions=resample_collisions)
    return ensemble_from_code(data, code, r, config, seed, trainer, n_jobs)
