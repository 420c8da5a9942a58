"""Empirical checks of the random binary classifier and ensemble challenges.

Statistical comparisons use a three-standard-error tolerance. Random streams
are derived from ``(experiment seed, trial index)`` so results do not depend
on evaluation order.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binomtest

from . import bounds, kernels
from .attack import AttackConfig, PerturbationSpace, QueryChannel, run_attack
from .codebook import (
    ABSTAIN,
    MASK64,
    as_rational,
    decode_batch,
    decode_leave_one_out_batch,
    derive_seed,
    max_accepted_distance,
    sample_code,
)
from .data import Dataset, synth_gaussian
from .ensemble import ColumnTrainer, Ensemble, ensemble_from_code
from .errors import DimensionError
from .learners import SubstituteModel, TrainConfig, train_substitute

DEFAULT_SAMPLE_SIZE = 40
_CHUNK = 4096


def _seeds(seed: int, start: int, stop: int) -> np.ndarray:
    return np.array([derive_seed(seed, t) for t in range(start, stop)], dtype=np.uint64)


def _rng(seed: int, *idx: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & MASK64, *idx]))


def _se(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n) if n else 0.0


def sample_conditioned_signs(n_classes: int, y: int, t: int, k: int, seed: int) -> np.ndarray:
    """``k`` Rademacher vectors with entry ``y`` forced to +1 and ``t`` to -1."""
    if y == t:
        raise ValueError("target must differ from the true class")
    z = kernels.counter_signs(_seeds(seed, 0, k), 1, n_classes)[:, 0, :].copy()
    z[:, y] = 1
    z[:, t] = -1
    return z


# -- random binary classifier challenge ---------------------------------------

@dataclass(frozen=True, eq=False)
class ChallengeSpec:
    x: np.ndarray
    y: int
    target: int
    space: PerturbationSpace
    sample_size: int = DEFAULT_SAMPLE_SIZE
    seed: int = 0

    def __post_init__(self):
        if self.target == self.y:
            raise ValueError("target must differ from the true class")
        if self.sample_size < 1:
            raise ValueError("sample_size must be >= 1")


@dataclass(frozen=True)
class FlipEstimate:
    rate: float
    flips: int
    n: int
    ci_lo: float
    ci_hi: float


def _wilson(k: int, n: int) -> tuple[float, float]:
    ci = binomtest(k, n).proportion_ci(confidence_level=0.95, method="wilson")
    return float(ci.low), float(ci.high)


def estimate_flip_rate(spec: ChallengeSpec, rho, data: Dataset, config: TrainConfig,
                       trainer: ColumnTrainer | None = None) -> FlipEstimate:
    """Fraction of ``z ~ D_yt`` whose trained classifier changes its output at ``x + rho``."""
    x = np.asarray(spec.x, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)
    x_adv = x + rho
    lo, hi = spec.space.clip_range
    if np.any(np.abs(rho) > spec.space.epsilon) or x_adv.min() < lo or x_adv.max() > hi:
        raise ValueError("perturbation lies outside the perturbation space")
    trainer = trainer or ColumnTrainer(data, config)
    zs = sample_conditioned_signs(data.n_classes, spec.y, spec.target, spec.sample_size, spec.seed)
    pts = np.stack([x, x_adv])
    flips = 0
    for z in zs:
        p = trainer.train(z).predict(pts)
        flips += int(p[0] != p[1])
    lo, hi = _wilson(flips, len(zs))
    return FlipEstimate(flips / len(zs), flips, len(zs), lo, hi)


@dataclass
class GridReport:
    n_classes: int
    rates: np.ndarray  # (N, N); NaN on the diagonal
    n_samples: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    stderr: np.ndarray
    point_rates: dict = field(default_factory=dict)  # (y, t) -> per-test-point success rates
    max_cell: tuple[int, int] | None = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["y", "t", "mean_flip_rate", "n_samples", "ci_lo", "ci_hi"])
        for y in range(self.n_classes):
            for t in range(self.n_classes):
                if y != t:
                    w.writerow([y, t, repr(float(self.rates[y, t])), int(self.n_samples[y, t]),
                                repr(float(self.ci_lo[y, t])), repr(float(self.ci_hi[y, t]))])
        return buf.getvalue()

    def table(self) -> str:
        head = "y\\t " + " ".join(f"{t:>6d}" for t in range(self.n_classes))
        lines = [head]
        for y in range(self.n_classes):
            cells = ["     -" if y == t else f"{self.rates[y, t]:6.3f}" for t in range(self.n_classes)]
            lines.append(f"{y:>4d} " + " ".join(cells))
        return "\n".join(lines)

    def to_dict(self) -> dict:
        nan_free = lambda a: [[None if np.isnan(v) else float(v) for v in row] for row in a]  # noqa: E731
        return {
            "n_classes": self.n_classes,
            "rates": nan_free(self.rates),
            "stderr": nan_free(self.stderr),
            "max_cell": list(self.max_cell) if self.max_cell else None,
            "point_rates": {f"{y},{t}": [float(v) for v in r] for (y, t), r in self.point_rates.items()},
        }


def pairwise_grid(data: Dataset, test: Dataset, substitute: SubstituteModel, attack: AttackConfig,
                  space: PerturbationSpace, config: TrainConfig, sample_size: int = DEFAULT_SAMPLE_SIZE,
                  seed: int = 0, targeted: bool = True, trainer: ColumnTrainer | None = None) -> GridReport:
    """Mean flip rate of random binary classifiers for every ordered class pair.

    Perturbations come from ``substitute`` (targeted at ``t`` when ``targeted``).
    Cell ``(y, t)`` draws ``sample_size`` sign vectors from ``D_yt`` and averages
    the flip indicator over the test points of class ``y``. The standard error
    is taken over the sampled classifiers, the only randomness in a cell.
    """
    N = data.n_classes
    trainer = trainer or ColumnTrainer(data, config)
    shape = (N, N)
    rates = np.full(shape, np.nan)
    se = np.full(shape, np.nan)
    lo = np.full(shape, np.nan)
    hi = np.full(shape, np.nan)
    counts = np.zeros(shape, dtype=np.int64)
    per_point = {}
    for y in range(N):
        Xy = test.features[test.labels == y]
        if len(Xy) == 0:
            continue
        untargeted = None if targeted else run_attack(substitute, Xy, y, space, attack)
        for t in range(N):
            if t == y:
                continue
            if targeted:
                cfg = AttackConfig(attack.kind, attack.steps, attack.step_size, attack.momentum, t)
                Xadv = run_attack(substitute, Xy, y, space, cfg)
            else:
                Xadv = untargeted
            zs = sample_conditioned_signs(N, y, t, sample_size, derive_seed(seed, y, t))
            flips = np.empty((sample_size, len(Xy)), dtype=bool)
            for k, z in enumerate(zs):
                f = trainer.train(z)
                flips[k] = f.predict(Xy) != f.predict(Xadv)
            per_clf = flips.mean(axis=1)
            rates[y, t] = flips.mean()
            se[y, t] = per_clf.std(ddof=1) / math.sqrt(sample_size) if sample_size > 1 else 0.0
            lo[y, t] = max(0.0, rates[y, t] - 1.96 * se[y, t])
            hi[y, t] = min(1.0, rates[y, t] + 1.96 * se[y, t])
            counts[y, t] = flips.size
            per_point[(y, t)] = flips.mean(axis=0)
    masked = np.where(np.isnan(rates), -1.0, rates)
    max_cell = tuple(int(v) for v in np.unravel_index(np.argmax(masked), shape))
    return GridReport(N, rates, counts, lo, hi, se, {max_cell: per_point[max_cell]}, max_cell)


def assumption_trend(class_counts=(4, 6, 8, 10, 12), per_class: int = 20, separation: float = 8.0,
                     epsilon: float = 1.0, attack: AttackConfig | None = None,
                     config: TrainConfig | None = None, sample_size: int = DEFAULT_SAMPLE_SIZE,
                     seed: int = 0) -> list[dict]:
    """Largest and mean pairwise flip rates as the number of classes grows. Reported, never asserted."""
    attack = attack or AttackConfig("pgd", steps=10)
    config = config or TrainConfig()
    rows = []
    for N in class_counts:
        train = synth_gaussian(N, N, per_class, separation, derive_seed(seed, N, 0))
        test = synth_gaussian(N, N, max(1, per_class // 4), separation, derive_seed(seed, N, 1),
                              feature_range=train.feature_range)
        sub = train_substitute(train.features, train.labels, "linear-softmax", config.replace(kind="logistic"), N)
        space = PerturbationSpace(epsilon, train.feature_range)
        grid = pairwise_grid(train, test, sub, attack, space, config, sample_size, derive_seed(seed, N, 2))
        off = grid.rates[~np.isnan(grid.rates)]
        rows.append({"n_classes": N, "max_flip_rate": float(off.max()), "mean_flip_rate": float(off.mean()),
                     "max_cell": list(grid.max_cell)})
    return rows


# -- ensemble challenge ---------------------------------------------------------

def ensemble_challenge(data: Dataset, x, y: int, attacker, code_length: int, r, trials: int,
                       config: TrainConfig, space: PerturbationSpace, seed: int = 0,
                       query_mode: str = "abstain", trainer: ColumnTrainer | None = None) -> dict:
    """Success rate of ``attacker`` over fresh code matrices.

    Each trial samples a new code, trains the ensemble, lets the attacker make
    one round of nonadaptive queries, and counts ``F(x_adv)`` outside
    ``{y, abstain}`` as a success.
    """
    if query_mode not in ("abstain", "no-abstain"):
        raise ValueError("query_mode must be 'abstain' or 'no-abstain'")
    x = np.asarray(x, dtype=np.float64)
    trainer = trainer or ColumnTrainer(data, config, seed)
    N = data.n_classes
    successes = 0
    correct = 0
    flips = np.zeros(N)
    pairs = np.zeros(N)
    col_flips = 0
    queries = 0
    for trial in range(trials):
        code = sample_code(N, code_length, derive_seed(seed, trial))
        ens = ensemble_from_code(data, code, r, config, seed, trainer)
        no_abstain = query_mode == "no-abstain"
        channel = QueryChannel(lambda Q, e=ens: e.classify_batch(Q, no_abstain=no_abstain), 1, no_abstain)
        x_adv = np.asarray(attacker.run(channel, x, y, _rng(seed, trial, 7)), dtype=np.float64)
        queries += len(channel.log)
        if not space.contains(x_adv, x):
            raise ValueError("attacker returned a point outside the perturbation space")
        words = ens.predict_codewords(np.stack([x, x_adv]))
        labels = decode_batch(code, words, r)[0]
        correct += int(labels[0] == y)
        successes += int(labels[1] not in (y, ABSTAIN))
        flipped = words[0] != words[1]
        col_flips += int(flipped.sum())
        differs = code.entries != code.entries[y][None, :]
        flips += (differs & flipped[None, :]).sum(axis=1)
        pairs += differs.sum(axis=1)
    eps_hat = successes / trials
    cond = np.divide(flips, pairs, out=np.full(N, np.nan), where=pairs > 0)
    cond[y] = np.nan
    max_cond = float(np.nanmax(cond)) if N > 1 else float("nan")
    delta_hat = 1.0 - max_cond
    return {
        "trials": trials,
        "success_rate": eps_hat,
        "stderr": _se(eps_hat, trials),
        "challenge_correct_rate": correct / trials,
        "column_flip_rate": col_flips / (trials * code_length),
        "conditional_flip_rate": [None if np.isnan(v) else float(v) for v in cond],
        "delta_hat": delta_hat,
        "epsilon_bound": bounds.epsilon_bound(code_length, r, delta_hat),
        "queries_per_trial": queries / trials,
    }


# -- lemma checks ---------------------------------------------------------------

def _all_signs(bits: int) -> np.ndarray:
    idx = np.arange(2 ** bits, dtype=np.int64)[:, None]
    return np.where((idx >> np.arange(bits)) & 1, -1, 1).astype(np.int8)


def verify_trim_lemma(N: int, M: int, r, trials: int = 100_000, exact: bool = False, seed: int = 0) -> dict:
    """Compare full and leave-one-out decoding on random (code, codeword) pairs.

    The disagreement rate for each dropped column is compared with the
    single-query trim bound; the worst column must stay within the bound plus
    three standard errors. ``exact`` enumerates every code matrix and codeword.
    """
    if exact:
        if N * M + M > 22:
            raise ValueError("exact enumeration is limited to N*M + M <= 22 bits")
        Z = _all_signs(N * M).reshape(-1, N, M)
        W = _all_signs(M)
        codes = np.repeat(Z, len(W), axis=0)
        words = np.tile(W, (len(Z), 1))
        n = len(words)
    else:
        n = trials
        codes = np.empty((n, N, M), dtype=np.int8)
        words = np.empty((n, M), dtype=np.int8)
        for start in range(0, n, _CHUNK):
            stop = min(n, start + _CHUNK)
            s = kernels.counter_signs(_seeds(seed, start, stop), N + 1, M)
            codes[start:stop] = s[:, :N]
            words[start:stop] = s[:, N]
    full = decode_batch(codes, words, r)[0]
    loo = decode_leave_one_out_batch(codes, words, r)[0]
    disagree = loo != full[:, None]
    per_col = disagree.mean(axis=0)
    worst = float(per_col.max())
    raw = bounds.trim_bound(N, M, r, 1)
    bound, vacuous = bounds.clamp(raw)
    sigma = 0.0 if exact else _se(worst, n)
    return {
        "mode": "exact" if exact else "monte-carlo",
        "N": N, "M": M, "r": str(as_rational(r)),
        "samples": n,
        "disagreement_rate": float(disagree.mean()),
        "max_column_rate": worst,
        "any_column_rate": float(disagree.any(axis=1).mean()),
        "stderr": sigma,
        "bound": bound,
        "bound_raw": raw,
        "is_vacuous": vacuous,
        "passed": worst <= bound + 3.0 * sigma,
    }


@dataclass(frozen=True)
class OracleClassifier:
    """Stub classifiers whose bits flip independently under the perturbation.

    On the challenge point every classifier outputs the code bit of the true
    class. On the perturbed point each bit flips with probability ``q_flip``;
    with ``targeted`` only bits where the target row disagrees can flip.
    """

    q_flip: float
    targeted: bool = False

    def __post_init__(self):
        if not 0.0 <= self.q_flip <= 1.0:
            raise ValueError("q_flip must lie in [0, 1]")

    def perturbed_codewords(self, codes: np.ndarray, y: int, target: int, rng) -> np.ndarray:
        clean = codes[:, y, :]
        flip = rng.random(clean.shape) < self.q_flip
        if self.targeted:
            flip &= codes[:, target, :] != clean
        return np.where(flip, -clean, clean).astype(np.int8)


def exact_oracle_success(N: int, M: int, r, q_flip: float) -> float:
    """Exact success probability of the untargeted oracle attack (no union bound).

    Rows other than ``y`` are independent of the perturbed codeword, so their
    distances are iid Binom(M, 1/2); the distance to row ``y`` is Binom(M, q).
    Success means a unique nearest row, not ``y``, strictly within ``M r``.
    """
    kmax = max_accepted_distance(M, r)
    half = [math.comb(M, k) / 2.0 ** M for k in range(M + 1)]
    own = [math.comb(M, k) * q_flip ** k * (1.0 - q_flip) ** (M - k) for k in range(M + 1)]
    total = 0.0
    for k in range(0, min(kmax, M) + 1):
        total += (N - 1) * half[k] * math.fsum(half[k + 1:]) ** (N - 2) * math.fsum(own[k + 1:])
    return total


def verify_binomial_lemma(oracle: OracleClassifier, N: int, M: int, r, trials: int = 20_000,
                          seed: int = 0, y: int = 0) -> dict:
    """Check the per-bit and ensemble-level consequences of independent bit flips.

    (a) the chance a perturbed bit matches another class's bit is at most
        ``1 - delta/2`` where ``delta = 1 - q_flip``;
    (b) ``delta <= delta_bound(M, r, eps_hat)`` using the lower 3-sigma end of
        the measured success ``eps_hat``;
    (c) untargeted only: ``eps_hat`` agrees within 3 sigma with both the
        ``(N - 1)``-fold union of the binomial tail and the exact probability.
    """
    target = (y + 1) % N
    delta = 1.0 - oracle.q_flip
    succ = 0
    match = 0
    match_n = 0
    for start in range(0, trials, _CHUNK):
        stop = min(trials, start + _CHUNK)
        codes = kernels.counter_signs(_seeds(seed, start, stop), N, M)
        adv = oracle.perturbed_codewords(codes, y, target, _rng(seed, start // _CHUNK))
        labels = decode_batch(codes, adv, r)[0]
        succ += int(((labels != y) & (labels != ABSTAIN)).sum())
        others = [target] if oracle.targeted else [t for t in range(N) if t != y]
        eq = adv[:, None, :] == codes[:, others, :]
        match += int(eq.sum())
        match_n += eq.size
    eps_hat = succ / trials
    sigma = _se(eps_hat, trials)
    p_match = match / match_n
    p_match_se = _se(p_match, trials * M)
    a_ok = p_match <= 1.0 - delta / 2.0 + 3.0 * p_match_se
    eps_lo = eps_hat - 3.0 * sigma
    if eps_lo > 0:
        d_bound = bounds.delta_bound(M, r, min(eps_lo, 1.0))
    else:
        d_bound = math.inf
    b_ok = delta <= d_bound
    out = {
        "N": N, "M": M, "r": str(as_rational(r)), "q_flip": oracle.q_flip, "targeted": oracle.targeted,
        "trials": trials,
        "delta_true": delta,
        "bit_match_rate": p_match,
        "bit_match_bound": 1.0 - delta / 2.0,
        "check_a": a_ok,
        "epsilon_hat": eps_hat,
        "stderr": sigma,
        "delta_bound": d_bound if math.isfinite(d_bound) else None,
        "check_b": b_ok,
    }
    if oracle.targeted:
        tail = bounds.binom_cdf_below(M, 0.5 * (1.0 - oracle.q_flip), M * as_rational(r))
        out["target_tail"] = tail
        out["passed"] = a_ok and b_ok
        return out
    tail = bounds.binom_cdf_below(M, 0.5, M * as_rational(r))
    union = bounds.union_success_bound(N, tail)
    exact = exact_oracle_success(N, M, r, oracle.q_flip)
    c_union = abs(eps_hat - union) <= 3.0 * _se(union, trials)
    c_exact = abs(eps_hat - exact) <= 3.0 * _se(exact, trials)
    out.update({"union_value": union, "exact_value": exact, "check_c_union": c_union,
                "check_c_exact": c_exact, "passed": a_ok and b_ok and c_union and c_exact})
    return out


# -- accuracy versus threshold ----------------------------------------------------

@dataclass(frozen=True)
class AccuracyReport:
    r: str
    true_accuracy: float
    adversarial_accuracy: float
    abstain_rate: float
    adversarial_abstain_rate: float


def accuracy_sweep(ensemble: Ensemble, X_nat, y_nat, X_adv, y_adv, r_grid) -> list[AccuracyReport]:
    """True and adversarial accuracy for each threshold, decoding cached codewords."""
    y_nat = np.asarray(y_nat)
    y_adv = np.asarray(y_adv)
    w_nat = ensemble.predict_codewords(X_nat)
    w_adv = ensemble.predict_codewords(X_adv)
    out = []
    for r in r_grid:
        ln = decode_batch(ensemble.code, w_nat, r)[0]
        la = decode_batch(ensemble.code, w_adv, r)[0]
        out.append(AccuracyReport(
            str(as_rational(r)),
            float(np.mean(ln == y_nat)),
            float(np.mean((la == y_adv) | (la == ABSTAIN))),
            float(np.mean(ln == ABSTAIN)),
            float(np.mean(la == ABSTAIN)),
        ))
    return out


def sweep_csv(rows: list[AccuracyReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["r", "true_accuracy", "adversarial_accuracy", "abstain_rate", "adversarial_abstain_rate"])
    for row in rows:
        w.writerow([row.r, repr(row.true_accuracy), repr(row.adversarial_accuracy),
                    repr(row.abstain_rate), repr(row.adversarial_abstain_rate)])
    return buf.getvalue()


# -- reduction simulation ----------------------------------------------------------

def simulate_reduction(data: Dataset, x, y: int, attacker, code_length: int, r, trials: int,
                       config: TrainConfig, space: PerturbationSpace, seed: int = 0,
                       query_mode: str = "abstain", trainer: ColumnTrainer | None = None) -> dict:
    """Run an ensemble attacker against an ensemble simulated without column 0.

    Column 0 plays the hidden random binary classifier. The attacker's queries
    are answered by the remaining columns only; the report measures how often
    those answers differ from the full ensemble's, how often the resulting
    perturbation flips the hidden classifier, and how often it fools the full
    ensemble.
    """
    if code_length < 2:
        raise DimensionError("the reduction needs at least two columns")
    x = np.asarray(x, dtype=np.float64)
    trainer = trainer or ColumnTrainer(data, config, seed)
    no_abstain = query_mode == "no-abstain"
    N = data.n_classes
    disagree_trials = 0
    n_queries = 0
    hidden_flips = 0
    hidden_pairs = 0
    col_flips = 0
    successes = 0
    for trial in range(trials):
        code = sample_code(N, code_length, derive_seed(seed, trial))
        ens = ensemble_from_code(data, code, r, config, seed, trainer)
        mismatch = []

        def simulated(Q, e=ens, c=code):
            words = e.predict_codewords(Q)
            sim = decode_leave_one_out_batch(c, words, r, no_abstain=no_abstain)[0][:, 0]
            full = decode_batch(c, words, r, no_abstain=no_abstain)[0]
            mismatch.append(bool(np.any(sim != full)))
            return sim

        channel = QueryChannel(simulated, 1, no_abstain)
        x_adv = np.asarray(attacker.run(channel, x, y, _rng(seed, trial, 7)), dtype=np.float64)
        if not space.contains(x_adv, x):
            raise ValueError("attacker returned a point outside the perturbation space")
        n_queries += len(channel.log)
        disagree_trials += int(any(mismatch))
        words = ens.predict_codewords(np.stack([x, x_adv]))
        flipped = words[0] != words[1]
        col_flips += int(flipped.sum())
        target_rows = code.entries[:, 0] != code.entries[y, 0]
        if target_rows.any():
            hidden_pairs += 1
            hidden_flips += int(flipped[0])
        label = decode_batch(code, words[1:], r)[0][0]
        successes += int(label not in (y, ABSTAIN))
    eps_hat = successes / trials
    q = max(1, round(n_queries / trials))
    tb, vac = bounds.clamp(bounds.trim_bound(N, code_length, r, q))
    return {
        "trials": trials,
        "queries_per_trial": n_queries / trials,
        "answer_disagreement_rate": disagree_trials / trials,
        "trim_bound": tb,
        "trim_bound_is_vacuous": vac,
        "hidden_flip_rate": hidden_flips / hidden_pairs if hidden_pairs else None,
        "column_flip_rate": col_flips / (trials * code_length),
        "ensemble_success_rate": eps_hat,
        "delta_bound_at_success": bounds.delta_bound(code_length, r, eps_hat) if eps_hat > 0 else None,
    }
