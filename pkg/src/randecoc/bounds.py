"""Closed-form bounds for the random code ensemble.

``trim_bound`` is the chance that dropping one column changes the ensemble's
answer to a fixed query, summed over ``Q`` queries. ``delta_bound`` and
``epsilon_bound`` convert between the ensemble's attack success ``epsilon``
and the per-classifier failure rate ``delta``. Bound functions return raw
values; use :func:`clamp` for reporting, which flags values >= 1 as vacuous.
"""
from __future__ import annotations

import math
from fractions import Fraction

from .codebook import as_rational


def h2(lam: float) -> float:
    """Binary entropy in bits, with h2(0) = h2(1) = 0."""
    lam = float(lam)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"h2 needs lambda in [0, 1], got {lam}")
    if lam in (0.0, 1.0):
        return 0.0
    return -lam * math.log2(lam) - (1.0 - lam) * math.log2(1.0 - lam)


def clamp(value: float) -> tuple[float, bool]:
    """``(min(value, 1), value >= 1)``."""
    return min(value, 1.0), value >= 1.0


def binom_entropy_bound(n: int, lam) -> float:
    """Upper bound ``2**(n h2(lam)) / sqrt(2 pi n lam (1 - lam))`` on C(n, lam n)."""
    q = as_rational(lam)
    if not 0 < q < 1:
        raise ValueError("lambda must lie in (0, 1)")
    if (q * n).denominator != 1:
        raise ValueError(f"lambda * n = {q * n} is not an integer")
    lam = float(q)
    return 2.0 ** (n * h2(lam)) / math.sqrt(2.0 * math.pi * n * lam * (1.0 - lam))


def hoeffding_tail(n: int, p: float, alpha: float) -> float:
    """``exp(-2 alpha^2 n)`` bounding Pr[Binom(n, p) <= (p - alpha) n]."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    return math.exp(-2.0 * alpha * alpha * n)


def _check(N, M, r, Q):
    if N < 2 or M < 1 or Q < 0:
        raise ValueError("need N >= 2, M >= 1, Q >= 0")
    r = float(as_rational(r))
    if not 0 < r < 1:
        raise ValueError("r must lie in (0, 1)")
    return r


def trim_bound(N: int, M: int, r, Q: int = 1) -> float:
    """``4 N Q sqrt((1 - r) / (2 pi M r)) 2**(-M (1 - h2(r)))`` (unclamped)."""
    r = _check(N, M, r, Q)
    return 4.0 * N * Q * math.sqrt((1.0 - r) / (2.0 * math.pi * M * r)) * 2.0 ** (-M * (1.0 - h2(r)))


def trim_bound_proof_form(N: int, M: int, r, Q: int = 1) -> float:
    """Variant carrying the extra factor ``M`` from the union over columns."""
    r = _check(N, M, r, Q)
    return 4.0 * N * Q * math.sqrt(M * (1.0 - r) / (2.0 * math.pi * r)) * 2.0 ** (-M * (1.0 - h2(r)))


def trim_counting_bound(N: int, M: int, r) -> float:
    """Boundary-count bound ``2 N C(M - 1, M r) / 2**(M - 1)`` before the entropy estimate.

    Requires ``M r`` to be an integer.
    """
    k = M * as_rational(r)
    if k.denominator != 1:
        raise ValueError("M * r must be an integer")
    return float(Fraction(2 * N * math.comb(M - 1, int(k)), 2 ** (M - 1)))


def delta_bound(M: int, r, epsilon: float, log_base: str = "e") -> float:
    """``2 (r + sqrt(log(1/epsilon) / (2 M)))``; natural log unless ``log_base='2'``."""
    if M < 1:
        raise ValueError("M must be >= 1")
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    log = math.log if log_base == "e" else math.log2 if log_base == "2" else None
    if log is None:
        raise ValueError("log_base must be 'e' or '2'")
    r = float(as_rational(r))
    return 2.0 * (r + math.sqrt(log(1.0 / epsilon) / (2.0 * M)))


def epsilon_bound(M: int, r, delta: float) -> float:
    """``exp(-2 M (delta/2 - r)^2)`` when ``r < delta / 2``, else 1 (vacuous)."""
    if M < 1:
        raise ValueError("M must be >= 1")
    r = float(as_rational(r))
    gap = delta / 2.0 - r
    if gap <= 0:
        return 1.0
    return math.exp(-2.0 * M * gap * gap)


def union_success_bound(N: int, tail: float) -> float:
    if not 0.0 <= tail <= 1.0:
        raise ValueError("tail must lie in [0, 1]")
    return min(1.0, (N - 1) * tail)


def binom_cdf_below(n: int, p: float, k_exclusive) -> float:
    """Exact Pr[Binom(n, p) < k_exclusive] by direct summation."""
    kmax = math.ceil(as_rational(k_exclusive)) - 1
    if kmax < 0:
        return 0.0
    return math.fsum(math.comb(n, k) * p ** k * (1.0 - p) ** (n - k) for k in range(min(kmax, n) + 1))


def report(N: int, M: int, r, Q: int, epsilon: float, delta: float) -> dict:
    """Every bound for one parameter set, with clamped values and vacuity flags."""
    out = {"inputs": {"N": N, "M": M, "r": float(as_rational(r)), "Q": Q, "epsilon": epsilon, "delta": delta}}
    r_f = float(as_rational(r))
    out["h2_r"] = h2(r_f)
    for name, raw in (("trim_bound", trim_bound(N, M, r, Q)),
                      ("trim_bound_proof_form", trim_bound_proof_form(N, M, r, Q))):
        val, vac = clamp(raw)
        out[name] = {"value": val, "raw": raw, "is_vacuous": vac}
    out["success_probability_lower"] = 1.0 - out["trim_bound"]["value"]
    d = delta_bound(M, r, epsilon)
    out["delta_bound"] = {"value": d, "log_base": "e", "base2_value": delta_bound(M, r, epsilon, "2")}
    e = epsilon_bound(M, r, delta)
    out["epsilon_bound"] = {"value": e, "is_vacuous": r_f >= delta / 2.0}
    out["union_over_targets"] = union_success_bound(N, e)
    return out
