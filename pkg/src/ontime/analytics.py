"""Closed-form on-time probabilities for uncontrolled and repeated transmissions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._validation import DomainError, check_int, check_probability


@dataclass(frozen=True)
class OnTimeSpec:
    """Target reception interval and deviation tolerance, both in slots.

    Packet ``m`` is on time when it completes in ``[m*t_target - delta,
    m*t_target + delta]``.
    """

    t_target: int = 5
    delta: int = 1

    def __post_init__(self):
        object.__setattr__(self, "t_target", check_int(self.t_target, "t_target", 1))
        object.__setattr__(self, "delta", check_int(self.delta, "delta", 0))

    def target_range(self, m):
        m = check_int(m, "m", 1)
        return m * self.t_target - self.delta, m * self.t_target + self.delta


@dataclass(frozen=True)
class AnalyticResult:
    per_packet_probs: np.ndarray
    kappa: float
    rate: float


def _log_comb(n, k):
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def _binom_term(n, k, p):
    """``C(n, k) p^k (1-p)^(n-k)`` without overflow; zero outside 0 <= k <= n."""
    if k < 0 or k > n:
        return 0.0
    q = 1.0 - p
    if q == 0.0:
        return 1.0 if k == n else 0.0
    return math.exp(_log_comb(n, k) + k * math.log(p) + (n - k) * math.log(q))


def prob_first_on_time(p, spec: OnTimeSpec) -> float:
    p = check_probability(p)
    q = 1.0 - p
    T, d = spec.t_target, spec.delta
    if T <= 1 + d:
        return 1.0 - q ** (T + d)
    return q ** (T - d - 1) - q ** (T + d)


def prob_mth_on_time(p, spec: OnTimeSpec, m) -> float:
    """Probability that packet ``m`` of an uncontrolled sequence is on time.

    The completion slot of packet ``m`` is negative-binomial; the sum over the
    target range is accumulated with the term ratio
    ``t(k+1)/t(k) = k/(k-m+1) * (1-p)`` starting from a log-space first term.
    """
    p = check_probability(p)
    m = check_int(m, "m", 1)
    q = 1.0 - p
    lo = max(m, m * spec.t_target - spec.delta)
    hi = m * spec.t_target + spec.delta
    if hi < lo:
        return 0.0
    if q == 0.0:
        return 1.0 if lo == m else 0.0
    log_term = _log_comb(lo - 1, m - 1) + m * math.log(p) + (lo - m) * math.log(q)
    term = math.exp(log_term)
    total = 0.0
    for k in range(lo, hi + 1):
        total += term
        term *= k / (k - m + 1) * q
    return min(max(total, 0.0), 1.0)


def per_packet_probabilities(p, spec: OnTimeSpec, M) -> np.ndarray:
    M = check_int(M, "M", 1)
    return np.array([prob_mth_on_time(p, spec, m) for m in range(1, M + 1)])


def expected_on_time_count(p, spec: OnTimeSpec, M) -> float:
    """Expected number of on-time packets among the first ``M``."""
    return float(math.fsum(per_packet_probabilities(p, spec, M)))


def analyze_random(p, spec: OnTimeSpec, M) -> AnalyticResult:
    probs = per_packet_probabilities(p, spec, M)
    kappa = float(math.fsum(probs))
    return AnalyticResult(per_packet_probs=probs, kappa=kappa, rate=kappa / len(probs))


def repeat_ccdf(p, spec: OnTimeSpec, n_r, j) -> float:
    """``Pr{S - t_target > j}`` for one packet allowed ``n_r`` retransmissions.

    A retransmission is issued while the packet completes before its target
    range and budget remains. When the budget exceeds the number of slots
    before the range (``t_target - 1 - delta``) it can never bind, so the
    effective budget is capped there.
    """
    p = check_probability(p)
    n_r = check_int(n_r, "n_r", 0)
    j = check_int(j, "j")
    q = 1.0 - p
    T, d = spec.t_target, spec.delta
    if T <= 1 + d:
        return 1.0 if j < -T else q ** (j + T)
    early = T - d - 1
    budget = min(n_r, early)
    if j < budget - T:
        return 1.0
    y = j + T
    if j >= -1 - d:
        # At most `budget` successes among the slots before the range, then
        # no success in the remaining y - early slots.
        mass = math.fsum(_binom_term(early, k, p) for k in range(budget + 1))
        return min(mass * q ** (y - early), 1.0)
    return min(math.fsum(_binom_term(y, k, p) for k in range(budget + 1)), 1.0)


def prob_on_time_with_repeats(p, spec: OnTimeSpec, n_r) -> float:
    d = spec.delta
    return max(repeat_ccdf(p, spec, n_r, -d - 1) - repeat_ccdf(p, spec, n_r, d), 0.0)


def nested_sum_identity(z, m, memoize=True) -> int:
    """Evaluate the ``m``-fold nested sum of ones with upper limits
    ``z - m``, ``z - y1 - (m-1)``, ..., ``z - (y1+...+y_{m-1}) - 1``.

    The closed form is ``C(z-1, m)``; this function does not use it. With
    ``memoize=False`` every innermost term is visited, which is only practical
    for small ``z``.
    """
    z = check_int(z, "z")
    m = check_int(m, "m", 1)
    if z < m + 1:
        raise DomainError(f"need z >= m + 1, got z={z}, m={m}")

    def levels(remaining, depth):
        if depth == 0:
            return 1
        return sum(inner(remaining - y, depth - 1) for y in range(1, remaining - depth + 1))

    inner = lru_cache(maxsize=None)(levels) if memoize else levels
    return inner(z, m)


@dataclass(frozen=True)
class EnumerationResult:
    """Distribution of the on-time count over an exhaustively enumerated grid."""

    count_probs: np.ndarray
    residual_mass: float
    cap: int

    @property
    def expected_count(self):
        k = np.arange(len(self.count_probs))
        return float(math.fsum(k * self.count_probs))


def enumerate_on_time_counts(p, spec: OnTimeSpec, M, tail_tol=1e-8, max_outcomes=2e8):
    """Brute-force ``Pr{k of M packets on time}`` by enumerating joint outcomes.

    Each packet's transmission time is capped at the smallest ``cap`` with
    geometric tail mass ``(1-p)^cap <= tail_tol``; the probability of the
    omitted outcomes is returned as ``residual_mass``.
    """
    p = check_probability(p)
    M = check_int(M, "M", 1)
    q = 1.0 - p
    cap = 1 if q == 0.0 else max(1, math.ceil(math.log(tail_tol) / math.log(q)))
    if float(cap) ** M > max_outcomes:
        raise DomainError(f"{cap}^{M} outcomes exceed the enumeration budget")
    s = np.arange(1, cap + 1)
    pmf = p * q ** (s - 1)
    T, d = spec.t_target, spec.delta
    # Outer loop over the first packet keeps each block at cap^(M-1) entries.
    counts = np.zeros(M + 1)
    for s1, w1 in zip(s, pmf):
        completion = np.array([s1])
        weight = np.array([w1])
        hits = np.array([int(abs(s1 - T) <= d)])
        for m in range(2, M + 1):
            completion = (completion[:, None] + s[None, :]).ravel()
            weight = (weight[:, None] * pmf[None, :]).ravel()
            hits = np.repeat(hits, cap) + (np.abs(completion - m * T) <= d)
        counts += np.bincount(hits, weights=weight, minlength=M + 1)
    residual = max(0.0, 1.0 - math.fsum(counts))
    return EnumerationResult(count_probs=counts, residual_mass=residual, cap=cap)
