"""White-box gradient attacks and the black-box substitute-training attack.

Every emitted point lies in the perturbation space: coordinate-wise within
``eps`` of ``x`` in exact arithmetic, and inside the clip range.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .codebook import ABSTAIN
from .data import Dataset
from .errors import DimensionError, ProtocolError
from .learners import SubstituteModel, TrainConfig, train_substitute

ATTACKS = ("fgsm", "pgd", "migm")


def _two_sum(a, b):
    # s + err == a + b exactly (Knuth)
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


@dataclass(frozen=True)
class PerturbationSpace:
    epsilon: float
    clip_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        lo, hi = self.clip_range
        if not lo < hi:
            raise ValueError("clip_range must satisfy lo < hi")

    def bounds(self, x):
        """Float box inside the exact ball: ``x -/+ eps`` rounded inward when inexact."""
        lo, hi = self.clip_range
        x = np.asarray(x, dtype=np.float64)
        below, e = _two_sum(x, -self.epsilon)
        below = np.where(e > 0, np.nextafter(below, np.inf), below)
        above, e = _two_sum(x, self.epsilon)
        above = np.where(e < 0, np.nextafter(above, -np.inf), above)
        return np.maximum(lo, below), np.minimum(hi, above)

    def project(self, x_adv, x):
        lo, hi = self.bounds(x)
        return np.clip(x_adv, lo, hi)

    def contains(self, x_adv, x) -> bool:
        lo, hi = self.bounds(x)
        x_adv = np.asarray(x_adv)
        return bool(np.all(x_adv >= lo) and np.all(x_adv <= hi))


@dataclass(frozen=True)
class AttackConfig:
    kind: str = "pgd"
    steps: int = 10
    step_size: float | None = None  # default epsilon / steps
    momentum: float = 1.0
    targeted: object = None

    def __post_init__(self):
        if self.kind not in ATTACKS:
            raise ValueError(f"unknown attack {self.kind!r}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.momentum < 0:
            raise ValueError("momentum must be >= 0")

    def alpha(self, space: PerturbationSpace) -> float:
        return self.step_size if self.step_size is not None else space.epsilon / self.steps


def _prepare(model: SubstituteModel, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.input_dim:
        raise DimensionError(f"expected dimension {model.input_dim}, got {x.shape[-1]}")
    return x


def fgsm(model: SubstituteModel, x, y, space: PerturbationSpace, targeted=None) -> np.ndarray:
    x = _prepare(model, x)
    g = model.input_gradient(x, y, targeted)
    return space.project(x + space.epsilon * np.sign(g), x)


def _check_iterate(space, xk, x):
    if not space.contains(xk, x):
        raise AssertionError("iterate left the perturbation space")


def pgd(model: SubstituteModel, x, y, space: PerturbationSpace, config: AttackConfig, trace: list | None = None):
    x = _prepare(model, x)
    alpha = config.alpha(space)
    xk = x.copy()
    for _ in range(config.steps):
        g = model.input_gradient(xk, y, config.targeted)
        xk = space.project(xk + alpha * np.sign(g), x)
        _check_iterate(space, xk, x)
        if trace is not None:
            trace.append(xk.copy())
    return xk


def migm(model: SubstituteModel, x, y, space: PerturbationSpace, config: AttackConfig, trace: list | None = None):
    """Momentum iterative sign attack: ``g <- mu * g + grad / |grad|_1``.

    A zero gradient adds nothing, so the step follows the accumulated
    momentum; with no momentum either the point stays put.
    """
    x = _prepare(model, x)
    alpha = config.alpha(space)
    xk = x.copy()
    acc = np.zeros_like(x)
    for _ in range(config.steps):
        grad = model.input_gradient(xk, y, config.targeted)
        norm = np.abs(grad).sum(axis=-1, keepdims=True)
        step = np.divide(grad, norm, out=np.zeros_like(grad), where=norm > 0)
        acc = config.momentum * acc + step
        xk = space.project(xk + alpha * np.sign(acc), x)
        _check_iterate(space, xk, x)
        if trace is not None:
            trace.append(xk.copy())
    return xk


def run_attack(model: SubstituteModel, x, y, space: PerturbationSpace, config: AttackConfig) -> np.ndarray:
    if config.kind == "fgsm":
        return fgsm(model, x, y, space, config.targeted)
    if config.kind == "pgd":
        return pgd(model, x, y, space, config)
    return migm(model, x, y, space, config)


# -- query protocol -----------------------------------------------------------

def query_hash(q) -> str:
    return hashlib.sha256(np.ascontiguousarray(q, dtype="<f8").tobytes()).hexdigest()


@dataclass
class QueryRecord:
    epoch: int
    query_vector_hash: str
    answer: int


@dataclass
class QueryLog:
    records: list = field(default_factory=list)
    events: list = field(default_factory=list)  # (sequence number, "query" | "answer", epoch)

    def __len__(self):
        return len(self.records)

    def count(self, epoch: int | None = None) -> int:
        return sum(1 for r in self.records if epoch is None or r.epoch == epoch)

    def queries_precede_answers(self) -> bool:
        """True when, in every epoch, all queries were fixed before any answer was released."""
        by_epoch: dict[int, list[int]] = {}
        for seq, kind, ep in self.events:
            d = by_epoch.setdefault(ep, [-1, None])
            if kind == "query":
                d[0] = max(d[0], seq)
            else:
                d[1] = seq if d[1] is None else min(d[1], seq)
        return all(first is None or last_q < first for last_q, first in by_epoch.values())

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps({"epoch": r.epoch, "query_vector_hash": r.query_vector_hash, "answer": r.answer}) + "\n"
            for r in self.records
        )

    @classmethod
    def from_jsonl(cls, text: str) -> "QueryLog":
        log = cls()
        for line in text.splitlines():
            if line.strip():
                d = json.loads(line)
                log.records.append(QueryRecord(d["epoch"], d["query_vector_hash"], d["answer"]))
        return log


class QueryChannel:
    """Black-box access limited to ``max_rounds`` batches of nonadaptive queries.

    Each :meth:`submit` freezes the whole batch (copy + hash) before the
    oracle sees any of it, so nothing in a batch can depend on that batch's
    answers. A further submission beyond ``max_rounds`` raises
    :class:`ProtocolError`.
    """

    def __init__(self, oracle, max_rounds: int = 1, no_abstain: bool = False, log: QueryLog | None = None):
        self.oracle = oracle
        self.max_rounds = max_rounds
        self.no_abstain = no_abstain
        self.log = log if log is not None else QueryLog()
        self.rounds = 0
        self._seq = 0

    def _event(self, kind, epoch):
        self.log.events.append((self._seq, kind, epoch))
        self._seq += 1

    def submit(self, queries) -> np.ndarray:
        if self.rounds >= self.max_rounds:
            raise ProtocolError(f"query round {self.rounds + 1} exceeds the allowed {self.max_rounds}")
        self.rounds += 1
        epoch = self.rounds
        frozen = np.array(queries, dtype=np.float64, copy=True)
        if frozen.ndim != 2:
            raise DimensionError("queries must be a (Q, d) array")
        frozen.setflags(write=False)
        hashes = [query_hash(q) for q in frozen]
        for _ in hashes:
            self._event("query", epoch)
        answers = np.asarray(self.oracle(frozen), dtype=np.int64).reshape(-1)
        if answers.shape[0] != frozen.shape[0]:
            raise ProtocolError("oracle returned the wrong number of answers")
        if self.no_abstain and np.any(answers == ABSTAIN):
            raise ProtocolError("oracle abstained in no-abstain mode")
        for h, a in zip(hashes, answers):
            self._event("answer", epoch)
            self.log.records.append(QueryRecord(epoch, h, int(a)))
        return answers.copy()


# -- substitute training attack ------------------------------------------------

@dataclass(frozen=True)
class SubstituteAttackConfig:
    initial_data: Dataset
    augmentation_epochs: int = 1
    lam: float = 0.1
    queries_per_epoch: int | None = None
    arch: str = "mlp"
    train_config: TrainConfig = field(default_factory=lambda: TrainConfig(learning_rate=0.1, epochs=300, hidden_width=64))

    def __post_init__(self):
        if self.augmentation_epochs < 0:
            raise ValueError("augmentation_epochs must be >= 0")
        if self.queries_per_epoch is not None and self.queries_per_epoch < 1:
            raise ValueError("queries_per_epoch must be positive")


def jacobian_augment(model: SubstituteModel, X, labels, lam: float, clip_range) -> np.ndarray:
    """Step each point by ``lam`` along the sign of its assigned label's logit gradient."""
    J = model.logit_gradient(X, labels)
    return np.clip(X + lam * np.sign(J), *clip_range)


def substitute_attack(oracle, config: SubstituteAttackConfig, attack: AttackConfig, x, y,
                      space: PerturbationSpace):
    """Train a substitute by Jacobian augmentation against ``oracle``, then attack it.

    ``oracle`` maps a (Q, d) batch to class labels and must not abstain.
    Returns ``(x_adv, query_log, substitute)``.
    """
    data = config.initial_data
    channel = QueryChannel(oracle, max_rounds=config.augmentation_epochs, no_abstain=True)
    Xs, ys = data.features, data.labels
    tc = config.train_config
    sub = train_substitute(Xs, ys, config.arch, tc, data.n_classes)
    for _ in range(config.augmentation_epochs):
        src_X, src_y = Xs, ys
        if config.queries_per_epoch is not None:
            src_X, src_y = Xs[:config.queries_per_epoch], ys[:config.queries_per_epoch]
        queries = jacobian_augment(sub, src_X, src_y, config.lam, data.feature_range)
        answers = channel.submit(queries)
        Xs = np.concatenate([Xs, queries])
        ys = np.concatenate([ys, answers])
        sub = train_substitute(Xs, ys, config.arch, tc, data.n_classes)
    x_adv = run_attack(sub, x, y, space, attack)
    return x_adv, channel.log, sub


# -- two-round attackers for the ensemble challenge -----------------------------
# ``run(channel, x, y, rng)`` returns the adversarial point ``x + rho`` itself,
# so containment is checked on exactly the point that gets classified.

class RandomBallAttacker:
    """Ignores the oracle and returns a uniformly random point of the ball."""

    def __init__(self, space: PerturbationSpace):
        self.space = space

    def run(self, channel, x, y, rng) -> np.ndarray:
        lo, hi = self.space.bounds(x)
        return rng.uniform(lo, hi)


class TransferAttacker:
    """Zero-query transfer attack from a substitute trained on public data."""

    def __init__(self, substitute: SubstituteModel, space: PerturbationSpace, attack: AttackConfig):
        self.substitute = substitute
        self.space = space
        self.attack = attack

    def run(self, channel, x, y, rng) -> np.ndarray:
        return run_attack(self.substitute, x, y, self.space, self.attack)


class QueryingSubstituteAttacker:
    """One nonadaptive epoch of Jacobian augmentation, then a white-box attack.

    Queries are computed from the public-data substitute only; abstained
    answers are dropped before retraining.
    """

    def __init__(self, public: Dataset, substitute: SubstituteModel, space: PerturbationSpace,
                 attack: AttackConfig, lam: float = 0.1, arch: str = "mlp",
                 train_config: TrainConfig | None = None, max_queries: int | None = None):
        self.public = public
        self.substitute = substitute
        self.space = space
        self.attack = attack
        self.lam = lam
        self.arch = arch
        self.train_config = train_config or TrainConfig(learning_rate=0.1, epochs=300, hidden_width=64)
        self.max_queries = max_queries
        n = len(public) if max_queries is None else min(max_queries, len(public))
        self.queries = jacobian_augment(substitute, public.features[:n], public.labels[:n], lam, public.feature_range)

    def run(self, channel, x, y, rng) -> np.ndarray:
        answers = channel.submit(self.queries)
        keep = answers != ABSTAIN
        X = np.concatenate([self.public.features, self.queries[keep]])
        Y = np.concatenate([self.public.labels, answers[keep]])
        sub = train_substitute(X, Y, self.arch, self.train_config, self.public.n_classes)
        return run_attack(sub, x, y, self.space, self.attack)
