import itertools
import json
import math
from fractions import Fraction

import numpy as np
import pytest

from randecoc import bounds, lab
from randecoc.attack import AttackConfig, PerturbationSpace, RandomBallAttacker
from randecoc.codebook import ABSTAIN
from randecoc.data import synth_gaussian, synth_symmetric
from randecoc.errors import DimensionError, ProtocolError
from randecoc.ensemble import build_ensemble
from randecoc.learners import TrainConfig, train_substitute

CFG = TrainConfig(learning_rate=0.5, epochs=100)


def wilson(k, n, z=1.959963984540054):
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z / den * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return mid - half, mid + half


def brute_decode(rows, w, r):
    d = [sum(a != b for a, b in zip(row, w)) for row in rows]
    best = min(d)
    if d.count(best) > 1 or not Fraction(best) < len(w) * Fraction(str(r)):
        return ABSTAIN
    return d.index(best)


@pytest.fixture(scope="module")
def world():
    train = synth_gaussian(4, 6, 30, 8.0, 0)
    test = synth_gaussian(4, 6, 5, 8.0, 1, train.feature_range)
    return train, test


def test_conditioned_signs():
    z = lab.sample_conditioned_signs(6, 1, 4, 2000, 3)
    assert np.all(z[:, 1] == 1) and np.all(z[:, 4] == -1)
    free = np.delete(z, [1, 4], axis=1)
    assert np.all(np.abs(free.mean(axis=0)) < 3 / math.sqrt(2000) * 1.5)
    with pytest.raises(ValueError):
        lab.sample_conditioned_signs(3, 1, 1, 5, 0)


def test_flip_rate_zero_perturbation(world):
    train, test = world
    spec = lab.ChallengeSpec(test.features[0], 0, 1, PerturbationSpace(1.0, train.feature_range))
    est = lab.estimate_flip_rate(spec, np.zeros(6), train, CFG)
    assert est.rate == 0.0 and est.flips == 0 and est.n == lab.DEFAULT_SAMPLE_SIZE
    with pytest.raises(ValueError):
        lab.estimate_flip_rate(spec, np.full(6, 2.0), train, CFG)
    with pytest.raises(ValueError):
        lab.ChallengeSpec(test.features[0], 2, 2, spec.space)


def test_flip_rate_two_classes_is_degenerate():
    train = synth_gaussian(2, 2, 30, 4.0, 2, feature_range=(-20.0, 20.0))
    space = PerturbationSpace(3.0, train.feature_range)
    rho = np.array([3.0, -3.0])
    for x in train.features[:10]:
        spec = lab.ChallengeSpec(x, 0, 1, space, sample_size=15)
        est = lab.estimate_flip_rate(spec, rho, train, CFG)
        assert est.rate in (0.0, 1.0)


def test_wilson_interval(world):
    train, test = world
    space = PerturbationSpace(4.0, train.feature_range)
    x = test.features[0]
    spec = lab.ChallengeSpec(x, 0, 1, space, sample_size=40, seed=2)
    rho = space.project(x + 4.0 * np.sign(train.features[30] - x), x) - x
    est = lab.estimate_flip_rate(spec, rho, train, CFG)
    lo, hi = wilson(est.flips, est.n)
    assert est.ci_lo == pytest.approx(lo, abs=1e-12) and est.ci_hi == pytest.approx(hi, abs=1e-12)


def test_grid_shape_and_csv(world):
    train, test = world
    sub = train_substitute(train.features, train.labels, "linear-softmax", CFG)
    space = PerturbationSpace(2.0, train.feature_range)
    for targeted in (True, False):
        grid = lab.pairwise_grid(train, test, sub, AttackConfig("fgsm"), space, CFG, 10, 0, targeted)
        assert np.all(np.isnan(np.diag(grid.rates)))
        off = grid.rates[~np.eye(4, dtype=bool)]
        assert np.all((off >= 0) & (off <= 1))
        lines = grid.to_csv().splitlines()
        assert lines[0] == "y,t,mean_flip_rate,n_samples,ci_lo,ci_hi"
        assert len(lines) - 1 == 4 * 3
        assert grid.max_cell in grid.point_rates
        json.dumps(grid.to_dict())
        assert "-" in grid.table()


def test_assumption_trend_reports():
    rows = lab.assumption_trend((3, 4), per_class=8, epsilon=1.0, attack=AttackConfig("fgsm"), config=CFG,
                                sample_size=5)
    assert [r["n_classes"] for r in rows] == [3, 4]
    assert all(0 <= r["mean_flip_rate"] <= r["max_flip_rate"] <= 1 for r in rows)


class ZeroAttacker:
    def run(self, channel, x, y, rng):
        return np.array(x, copy=True)


class GreedyAttacker:
    def run(self, channel, x, y, rng):
        channel.submit(x[None])
        channel.submit(x[None])
        return x


def test_ensemble_challenge(world):
    train, test = world
    space = PerturbationSpace(0.5, train.feature_range)
    x, y = test.features[0], int(test.labels[0])
    rep = lab.ensemble_challenge(train, x, y, ZeroAttacker(), 16, 0.25, 5, CFG, space)
    assert rep["success_rate"] == 0.0 and rep["column_flip_rate"] == 0.0
    rnd = lab.ensemble_challenge(train, x, y, RandomBallAttacker(space), 64, 0.25, 20, CFG, space)
    assert rnd["success_rate"] <= rnd["epsilon_bound"] + 3 * math.sqrt(0.25 / 20)
    with pytest.raises(ProtocolError):
        lab.ensemble_challenge(train, x, y, GreedyAttacker(), 8, 0.25, 1, CFG, space)
    with pytest.raises(ValueError):
        lab.ensemble_challenge(train, x, y, ZeroAttacker(), 8, 0.25, 1, CFG, space, query_mode="adaptive")


def _brute_trim(N, M, r):
    cols = [0] * M
    total = 0
    for bits in itertools.product((1, -1), repeat=N * M + M):
        rows = [bits[i * M:(i + 1) * M] for i in range(N)]
        w = bits[N * M:]
        full = brute_decode(rows, w, r)
        for j in range(M):
            drop = [row[:j] + row[j + 1:] for row in rows]
            d = [sum(a != b for a, b in zip(row, w[:j] + w[j + 1:])) for row in drop]
            best = min(d)
            loo = d.index(best) if d.count(best) == 1 and Fraction(best) < M * Fraction(str(r)) else ABSTAIN
            cols[j] += loo != full
        total += 1
    return [Fraction(c, total) for c in cols]


def test_trim_lemma_exact_matches_brute_force():
    rep = lab.verify_trim_lemma(2, 3, 0.4, exact=True)
    ref = _brute_trim(2, 3, 0.4)
    assert rep["samples"] == 512
    assert Fraction(rep["max_column_rate"]) == max(ref)
    assert rep["passed"] and rep["is_vacuous"]
    with pytest.raises(ValueError):
        lab.verify_trim_lemma(4, 5, 0.4, exact=True)


@pytest.mark.parametrize("N,M,r", [(2, 3, 0.4), (3, 4, 0.3)])
def test_trim_lemma_modes_agree(N, M, r):
    ex = lab.verify_trim_lemma(N, M, r, exact=True)
    mc = lab.verify_trim_lemma(N, M, r, trials=40_000, seed=4)
    sigma = math.sqrt(ex["disagreement_rate"] * (1 - ex["disagreement_rate"]) / 40_000)
    assert abs(ex["disagreement_rate"] - mc["disagreement_rate"]) <= 3 * sigma


def _brute_oracle_success(N, M, r, q):
    """Exact success over every code and flip pattern with y = 0."""
    total = Fraction(0)
    qf = Fraction(str(q))
    for bits in itertools.product((1, -1), repeat=N * M):
        rows = [bits[i * M:(i + 1) * M] for i in range(N)]
        for flips in itertools.product((0, 1), repeat=M):
            k = sum(flips)
            wgt = qf ** k * (1 - qf) ** (M - k)
            if wgt == 0:
                continue
            w = tuple(-b if f else b for b, f in zip(rows[0], flips))
            lab_ = brute_decode(rows, w, r)
            if lab_ not in (0, ABSTAIN):
                total += wgt
    return total / 2 ** (N * M)


@pytest.mark.parametrize("q", [0.3, 1.0])
def test_exact_oracle_success_matches_enumeration(q):
    ref = _brute_oracle_success(3, 4, 0.49, q)
    assert lab.exact_oracle_success(3, 4, 0.49, q) == pytest.approx(float(ref), rel=1e-12)


def test_binomial_lemma_degenerate_flips():
    rep0 = lab.verify_binomial_lemma(lab.OracleClassifier(0.0), 5, 12, 0.25, trials=3000)
    assert rep0["epsilon_hat"] == 0.0
    ref = float(_brute_oracle_success(3, 4, 0.49, 1.0))
    rep1 = lab.verify_binomial_lemma(lab.OracleClassifier(1.0), 3, 4, 0.49, trials=20_000, seed=1)
    assert abs(rep1["epsilon_hat"] - ref) <= 3 * math.sqrt(ref * (1 - ref) / 20_000)


def test_binomial_lemma_targeted_runs():
    rep = lab.verify_binomial_lemma(lab.OracleClassifier(0.8, targeted=True), 6, 20, 0.25, trials=5000)
    assert rep["check_a"] and rep["passed"]
    assert "union_value" not in rep
    with pytest.raises(ValueError):
        lab.OracleClassifier(1.5)


def test_accuracy_sweep_endpoints(world):
    train, test = world
    ens = build_ensemble(train, 24, 0.25, 0, CFG)
    rows = lab.accuracy_sweep(ens, test.features, test.labels, test.features, test.labels, [0, 0.25, 0.5])
    assert (rows[0].true_accuracy, rows[0].adversarial_accuracy) == (0.0, 1.0)
    assert rows[0].r == "0" and rows[1].r == "1/4"
    assert lab.sweep_csv(rows).splitlines()[0] == \
        "r,true_accuracy,adversarial_accuracy,abstain_rate,adversarial_abstain_rate"


def test_simulate_reduction(world):
    train, test = world
    space = PerturbationSpace(0.5, train.feature_range)
    x, y = test.features[1], int(test.labels[1])
    rep = lab.simulate_reduction(train, x, y, RandomBallAttacker(space), 16, 0.25, 6, CFG, space)
    assert rep["queries_per_trial"] == 0 and rep["answer_disagreement_rate"] == 0
    assert rep["trim_bound"] == min(1.0, bounds.trim_bound(4, 16, 0.25, 1))
    with pytest.raises(DimensionError):
        lab.simulate_reduction(train, x, y, RandomBallAttacker(space), 1, 0.25, 1, CFG, space)


def test_symmetric_grid_small():
    train = synth_symmetric(3, 20, 8.0, 0)
    test = synth_symmetric(3, 6, 8.0, 1, train.feature_range)
    sub = train_substitute(train.features, train.labels, "linear-softmax", CFG)
    grid = lab.pairwise_grid(train, test, sub, AttackConfig("fgsm"), PerturbationSpace(3.0, train.feature_range),
                             CFG, 20, 0)
    assert grid.n_samples[0, 1] == 20 * 6
