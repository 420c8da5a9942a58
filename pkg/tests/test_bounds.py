import math
from fractions import Fraction

import pytest
from hypothesis import assume, given, strategies as st

import oracles
from randecoc import bounds

# frozen reference values, recomputed by the oracle in test_frozen_values_match_oracle
H2_QUARTER = 0.8112781244591328
DELTA_200 = 0.2517427129385146
EPS_200 = 0.01831563888873418
TRIM_10_100 = 4.957536220750378e-16
TRIM_2_3 = 2.124471100560160


def test_frozen_values_match_oracle():
    assert oracles.sig_equal(H2_QUARTER, oracles.h2(0.25), 15)
    assert oracles.sig_equal(DELTA_200, oracles.delta(200, 0.05, 0.1), 15)
    assert oracles.sig_equal(EPS_200, oracles.epsilon(200, 0.05, 0.3), 15)
    assert oracles.sig_equal(TRIM_10_100, oracles.trim(10, 100, 0.1), 14)
    assert oracles.sig_equal(TRIM_2_3, oracles.trim(2, 3, 0.4), 14)


def test_h2():
    assert bounds.h2(0.5) == 1.0
    assert bounds.h2(0) == 0.0 and bounds.h2(1) == 0.0
    assert oracles.sig_equal(bounds.h2(0.25), H2_QUARTER, 12)
    with pytest.raises(ValueError):
        bounds.h2(1.5)


def test_binom_entropy_bound():
    assert bounds.binom_entropy_bound(10, 0.5) == pytest.approx(258.37, abs=0.005)
    assert bounds.binom_entropy_bound(10, 0.5) >= math.comb(10, 5)
    with pytest.raises(ValueError):
        bounds.binom_entropy_bound(10, 0.25)


def test_hoeffding_example():
    assert bounds.hoeffding_tail(100, 0.5, 0.1) == pytest.approx(0.135335, abs=5e-7)
    exact = oracles.binom_cdf(100, Fraction(1, 2), 40)
    assert float(exact) == pytest.approx(0.0284, abs=5e-5)
    assert exact <= Fraction(bounds.hoeffding_tail(100, 0.5, 0.1))
    assert bounds.hoeffding_tail(100, 0.5, 1e-12) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        bounds.hoeffding_tail(10, 0.5, 0.0)


@given(st.integers(1, 500), st.integers(1, 500), st.floats(0.01, 0.99), st.floats(1e-3, 1.0))
def test_hoeffding_monotone(n1, n2, p, alpha):
    lo, hi = sorted((n1, n2))
    assert bounds.hoeffding_tail(hi, p, alpha) <= bounds.hoeffding_tail(lo, p, alpha)
    assert bounds.hoeffding_tail(lo, p, alpha * 1.5) <= bounds.hoeffding_tail(lo, p, alpha)


def test_trim_examples():
    assert oracles.sig_equal(bounds.trim_bound(10, 100, 0.1, 1), TRIM_10_100, 10)
    assert bounds.trim_bound(10, 100, 0.1, 2) == 2 * bounds.trim_bound(10, 100, 0.1, 1)
    assert bounds.trim_bound_proof_form(10, 100, 0.1) == pytest.approx(100 * TRIM_10_100, rel=1e-13)
    with pytest.raises(ValueError):
        bounds.trim_bound(1, 10, 0.1)
    with pytest.raises(ValueError):
        bounds.trim_bound(3, 10, 1.0)


def _increasing_here(M, r):
    # d/dr log trim_bound >= 0  <=>  2 M r (1 - r) ln((1 - r) / r) >= 1
    return 2 * M * r * (1 - r) * math.log((1 - r) / r) >= 1


@given(st.integers(2, 50), st.integers(1, 400), st.floats(0.001, 0.499), st.floats(0.001, 0.499))
def test_trim_monotone_in_r(N, M, r1, r2):
    lo, hi = sorted((r1, r2))
    # the condition is unimodal in r, so checking both ends covers the interval
    assume(_increasing_here(M, lo) and _increasing_here(M, hi))
    assert bounds.trim_bound(N, M, lo) <= bounds.trim_bound(N, M, hi) * (1 + 1e-12)


def test_trim_prefactor_limit():
    for N, M in [(2, 10), (10, 100)]:
        r = 0.5 - 1e-9
        pref = 4 * N * math.sqrt((1 - r) / (2 * math.pi * M * r))
        assert bounds.trim_bound(N, M, r) == pytest.approx(pref, rel=1e-6)


@given(st.integers(2, 30), st.integers(2, 60), st.data())
def test_trim_dominates_counting_form(N, M, data):
    k = data.draw(st.integers(1, (M - 1) // 2 if M > 2 else 1))
    assume(2 * k < M)
    r = Fraction(k, M)
    assert bounds.trim_counting_bound(N, M, r) <= bounds.trim_bound(N, M, r) * (1 + 1e-12)


def test_delta_bound():
    assert bounds.delta_bound(200, 0.05, 1.0) == 2 * 0.05
    for M, r in [(1, 0.3), (50, 0.125), (1000, 0.2)]:
        assert bounds.delta_bound(M, r, 1) == 2 * r
    assert oracles.sig_equal(bounds.delta_bound(200, 0.05, 0.1), DELTA_200, 10)
    assert bounds.delta_bound(200, 0.05, 0.1, "2") == pytest.approx(
        float(2 * (0.05 + math.sqrt(math.log2(10) / 400))), rel=1e-15)
    with pytest.raises(ValueError):
        bounds.delta_bound(10, 0.1, 0.0)
    with pytest.raises(ValueError):
        bounds.delta_bound(10, 0.1, 0.5, "10")


@given(st.integers(1, 10 ** 5), st.integers(1, 10 ** 5), st.floats(0.0, 0.5), st.floats(1e-6, 1.0))
def test_delta_bound_decreases_to_2r(m1, m2, r, eps):
    lo, hi = sorted((m1, m2))
    assert 2 * r <= bounds.delta_bound(hi, r, eps) <= bounds.delta_bound(lo, r, eps)


def test_epsilon_bound():
    assert oracles.sig_equal(bounds.epsilon_bound(200, 0.05, 0.3), EPS_200, 10)
    for M, r in [(1, 0.3), (200, 0.05), (64, 0.25)]:
        assert bounds.epsilon_bound(M, r, 2 * r) == 1.0
        assert bounds.epsilon_bound(M, r, r) == 1.0


@given(st.integers(1, 5000), st.floats(0.001, 0.45), st.floats(1e-9, 0.999))
def test_epsilon_inverts_delta(M, r, eps):
    d = bounds.delta_bound(M, r, eps)
    assert bounds.epsilon_bound(M, r, d) <= eps * (1 + 1e-9)


def test_union_success_bound():
    assert bounds.union_success_bound(2, 0.3) == 0.3
    assert bounds.union_success_bound(7, 0.0) == 0.0
    assert bounds.union_success_bound(11, 0.05) == pytest.approx(0.5)
    assert bounds.union_success_bound(100, 0.5) == 1.0
    with pytest.raises(ValueError):
        bounds.union_success_bound(3, 1.5)


def test_binom_cdf_below_exact():
    for n, p, k in [(20, 0.5, 5), (20, 0.15, 5.5), (7, 0.3, 0), (7, 0.3, 100)]:
        ref = oracles.binom_cdf(n, Fraction(str(p)), math.ceil(k) - 1)
        assert bounds.binom_cdf_below(n, p, k) == pytest.approx(float(ref), rel=1e-12)


def test_clamp_and_report():
    assert bounds.clamp(2.5) == (1.0, True)
    assert bounds.clamp(0.25) == (0.25, False)
    rep = bounds.report(2, 3, 0.4, 1, 0.1, 0.3)
    assert rep["trim_bound"]["is_vacuous"] and rep["trim_bound"]["value"] == 1.0
    assert rep["epsilon_bound"]["is_vacuous"]
    rep = bounds.report(10, 100, 0.1, 1, 0.1, 0.3)
    assert rep["trim_bound"]["raw"] == bounds.trim_bound(10, 100, 0.1)
    assert rep["delta_bound"]["log_base"] == "e"


@given(st.integers(2, 100), st.integers(1, 2000), st.floats(0.001, 0.999), st.integers(0, 50),
       st.floats(1e-6, 1.0), st.floats(1e-6, 0.999))
def test_all_bounds_finite_nonnegative(N, M, r, Q, eps, d):
    vals = [bounds.trim_bound(N, M, r, Q), bounds.trim_bound_proof_form(N, M, r, Q),
            bounds.delta_bound(M, r, eps), bounds.epsilon_bound(M, r, d), bounds.h2(r)]
    assert all(math.isfinite(v) and v >= 0 for v in vals)


@given(st.integers(2, 20), st.integers(5, 300), st.floats(0.02, 0.45), st.floats(1e-4, 1e-3))
def test_bounds_continuous_in_r(N, M, r, h):
    a, b = bounds.trim_bound(N, M, r), bounds.trim_bound(N, M, r + h * 1e-6)
    assert abs(a - b) <= 1e-3 * max(a, 1e-300) + 1e-300
