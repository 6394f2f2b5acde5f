"""Stationary queueing quantities for the online demand model.

Without control, active demands form an M/M/inf occupancy process, so the
number of active unit-power demands is Poisson(lambda/s). No policy can beat
``C(lambda E[P] / s)``: shifting demands in time leaves mean power unchanged
and the cost is convex. The controlled-release policy without deadlines is an
M/M/c queue whose busy-server count is the consumed power.

All pmfs are evaluated in log space and truncated once the remaining tail
mass drops below :data:`TAIL_MASS`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import special, stats

from .task_model import CostFunction

TAIL_MASS = 1e-12
TAIL_COST_REL = 1e-9


class UnstableSystemError(ValueError):
    """Offered load per server is at least one."""


@dataclass(frozen=True)
class StochasticParams:
    """Arrival rate ``lam``, service rate ``s``, deadline rate ``d`` and the
    per-demand power distribution as ``(power, probability)`` pairs."""

    lam: float
    s: float
    d: float = 1.0
    power_dist: tuple[tuple[float, float], ...] = ((1.0, 1.0),)

    def __post_init__(self) -> None:
        dist = tuple((float(p), float(w)) for p, w in self.power_dist)
        object.__setattr__(self, "power_dist", dist)
        if self.lam <= 0 or self.s <= 0:
            raise ValueError(f"need lam > 0 and s > 0, got lam={self.lam}, s={self.s}")
        if self.d < 0:
            raise ValueError(f"deadline rate must be >= 0, got {self.d}")
        if not dist:
            raise ValueError("empty power distribution")
        powers = [p for p, _ in dist]
        if any(p <= 0 for p in powers) or len(set(powers)) != len(powers):
            raise ValueError(f"powers must be positive and distinct, got {powers}")
        weights = [w for _, w in dist]
        if any(w <= 0 for w in weights) or abs(math.fsum(weights) - 1.0) > 1e-12:
            raise ValueError(f"weights must be positive and sum to 1, got {weights}")

    @property
    def offered_load(self) -> float:
        return self.lam / self.s

    @property
    def mean_power(self) -> float:
        return math.fsum(p * w for p, w in self.power_dist)

    @property
    def mean_total_power(self) -> float:
        """Stationary mean of total power, policy independent."""
        return self.lam * self.mean_power / self.s

    @property
    def unit_power(self) -> bool:
        return self.power_dist == ((1.0, 1.0),)


@dataclass(frozen=True)
class StationaryDistribution:
    support: np.ndarray
    probabilities: np.ndarray
    truncation_error: float

    def expect(self, f) -> float:
        return float(np.dot(self.probabilities, np.atleast_1d(f(self.support))))

    def mean(self) -> float:
        return self.expect(lambda x: x)


@dataclass(frozen=True)
class CostEstimate:
    """Expected cost; ``stderr`` is 0 when computed exactly."""

    value: float
    stderr: float = 0.0
    exact: bool = True

    def __float__(self) -> float:
        return self.value


# ---------------------------------------------------------------------------
# Default policy (M/M/inf)


def _poisson_logpmf(mean: float, i):
    i = np.asarray(i, dtype=float)
    return i * math.log(mean) - mean - special.gammaln(i + 1.0)


def mm_inf_pmf(params: StochasticParams, i: int) -> float:
    """Stationary probability of ``i`` active demands under no control."""
    if i < 0:
        return 0.0
    return float(np.exp(_poisson_logpmf(params.offered_load, i)))


def poisson_distribution(mean: float, tail: float = TAIL_MASS) -> StationaryDistribution:
    """Poisson(mean) truncated where the upper tail mass falls below ``tail``."""
    n_max = int(stats.poisson.isf(tail, mean)) + 1
    while stats.poisson.sf(n_max, mean) >= tail:
        n_max += 1
    support = np.arange(n_max + 1, dtype=float)
    probs = np.exp(_poisson_logpmf(mean, support))
    return StationaryDistribution(support, probs, float(stats.poisson.sf(n_max, mean)))


def _tail_cost_bound(mean: float, C: CostFunction, n: int) -> float:
    """Bound on ``sum_{i > n} q_i |C(i)|`` for Poisson(mean), valid once terms decay.

    Beyond the mode the term ratio ``mean/(i+1) * C(i+1)/C(i)`` decreases for
    costs of at most quadratic growth, so a geometric series bounds the tail.
    """
    i = np.arange(n + 1, n + 3, dtype=float)
    terms = np.exp(_poisson_logpmf(mean, i)) * np.abs(C.evaluate(i))
    if terms[0] == 0.0:
        return 0.0
    ratio = terms[1] / terms[0]
    if ratio >= 1.0:
        return math.inf
    return float(terms[0] / (1.0 - ratio))


def _poisson_expected_cost(mean: float, C: CostFunction) -> float:
    dist = poisson_distribution(mean)
    n = int(dist.support[-1])
    value = dist.expect(C.evaluate)
    while _tail_cost_bound(mean, C, n) > TAIL_COST_REL * max(abs(value), 1e-300):
        n = int(n * 1.5) + 10
        dist = StationaryDistribution(
            np.arange(n + 1, dtype=float),
            np.exp(_poisson_logpmf(mean, np.arange(n + 1))),
            float(stats.poisson.sf(n, mean)),
        )
        value = dist.expect(C.evaluate)
    return value


def default_policy_cost(params: StochasticParams, C: CostFunction) -> float:
    """Long-run average cost with every unit-power demand served on arrival."""
    if not params.unit_power:
        raise ValueError("non-unit power distribution: use compound_default_cost")
    return _poisson_expected_cost(params.offered_load, C)


def _common_quantum(powers: Sequence[float], max_den: int = 1000, max_units: int = 10_000):
    """Largest ``q`` with every power an integer multiple of it, or None."""
    base = powers[0]
    fracs = []
    for p in powers:
        f = Fraction(p / base).limit_denominator(max_den)
        if abs(float(f) * base - p) > 1e-9 * p:
            return None
        fracs.append(f)
    lcm = math.lcm(*(f.denominator for f in fracs))
    units = [f.numerator * (lcm // f.denominator) for f in fracs]
    g = math.gcd(*units)
    units = [u // g for u in units]
    if max(units) > max_units:
        return None
    return base * g / lcm, units


def compound_power_distribution(params: StochasticParams) -> Optional[StationaryDistribution]:
    """Stationary law of total power ``sum_k p_k N_k``, ``N_k ~ Poisson(lam w_k / s)``.

    Returns None when the powers share no usable common quantum.
    """
    found = _common_quantum([p for p, _ in params.power_dist])
    if found is None:
        return None
    quantum, units = found
    per_class_tail = TAIL_MASS / (2 * len(units))
    pmf = np.array([1.0])
    lost = 0.0
    for (p, w), u in zip(params.power_dist, units):
        part = poisson_distribution(params.offered_load * w, per_class_tail)
        lost += part.truncation_error
        spread = np.zeros(u * (len(part.probabilities) - 1) + 1)
        spread[::u] = part.probabilities
        pmf = np.convolve(pmf, spread)
    support = quantum * np.arange(len(pmf), dtype=float)
    return StationaryDistribution(support, pmf, lost)


def compound_default_cost(
    params: StochasticParams, C: CostFunction, mc_samples: int = 200_000, seed: int = 0
) -> CostEstimate:
    """Long-run average cost under no control with random per-demand power.

    Exact by convolution on the common power quantum; falls back to Monte
    Carlo (with standard error) when the powers are incommensurable.
    """
    if params.unit_power:
        return CostEstimate(default_policy_cost(params, C))
    dist = compound_power_distribution(params)
    if dist is not None:
        return CostEstimate(dist.expect(C.evaluate))
    warnings.warn("incommensurable powers: estimating compound cost by Monte Carlo", stacklevel=2)
    rng = np.random.default_rng(seed)
    total = np.zeros(mc_samples)
    for p, w in params.power_dist:
        total += p * rng.poisson(params.offered_load * w, size=mc_samples)
    vals = np.asarray(C.evaluate(total))
    return CostEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(mc_samples)), False)


def weighted_mixture_cost_diagnostic(params: StochasticParams, C: CostFunction) -> float:
    """``sum_i sum_k q_i p_k C(i w_k)`` with ``q`` the Poisson(lam/s) pmf.

    Diagnostic only: this mixes power values and class weights in a way that
    does not equal the expected cost of the compound model (see
    :func:`compound_default_cost`). Kept so the two can be compared.
    """
    dist = poisson_distribution(params.offered_load)
    return math.fsum(
        p * dist.expect(lambda i, w=w: C.evaluate(i * w)) for p, w in params.power_dist
    )


def universal_lower_bound(params: StochasticParams, C: CostFunction) -> float:
    """``C(lam E[P] / s)``: no scheduling policy has lower long-run average cost."""
    return float(C.evaluate(params.mean_total_power))


# ---------------------------------------------------------------------------
# Controlled release without deadlines (M/M/c)


def mmc_stationary(lam: float, s: float, c: int, tail: float = TAIL_MASS) -> StationaryDistribution:
    """Stationary number in system of an M/M/c queue, truncated at tail mass ``tail``."""
    if c < 1 or int(c) != c:
        raise ValueError(f"server count must be a positive integer, got {c}")
    c = int(c)
    a = lam / s
    rho = a / c
    if rho >= 1.0:
        raise UnstableSystemError(f"rho = {rho:.6g} >= 1 (lam={lam}, s={s}, c={c})")
    log_a = math.log(a)
    head = np.arange(c, dtype=float)
    log_head = head * log_a - special.gammaln(head + 1.0)
    log_c = c * log_a - special.gammaln(c + 1.0)
    # sum_{n >= c} a^c/c! rho^(n-c) = a^c/c! / (1 - rho)
    log_norm = special.logsumexp(np.append(log_head, log_c - math.log1p(-rho)))
    # tail beyond n >= c is p_n * rho / (1 - rho)
    log_ratio = math.log(rho / (1.0 - rho))
    extra = 0
    if rho > 0:
        need = (math.log(tail) - (log_c - log_norm) - log_ratio) / math.log(rho)
        extra = max(0, math.ceil(need))
    n = np.arange(c + extra + 1, dtype=float)
    logp = np.where(
        n < c,
        n * log_a - special.gammaln(n + 1.0),
        log_c + (n - c) * math.log(rho) if rho > 0 else -np.inf,
    ) - log_norm
    probs = np.exp(logp)
    tail_mass = float(probs[-1] * rho / (1.0 - rho))
    return StationaryDistribution(n, probs, tail_mass)


def mmc_power_cost(lam: float, s: float, c: int, C: CostFunction) -> float:
    """Expected ``C(min(N, c))``: cost of the busy-server count of an M/M/c queue.

    Every truncated state has all ``c`` servers busy, so the tail is added exactly.
    """
    dist = mmc_stationary(lam, s, c)
    busy = np.minimum(dist.support, c)
    return float(np.dot(dist.probabilities, C.evaluate(busy)) + dist.truncation_error * C.evaluate(c))


@dataclass(frozen=True)
class AsymptoticsRow:
    epsilon: float
    threshold: float
    servers: int
    rho: float
    mmc_cost: float
    lower_bound: float
    gap: float
    stable: bool


def cr_asymptotics(
    params: StochasticParams, epsilons: Iterable[float], C: CostFunction
) -> list[AsymptoticsRow]:
    """M/M/c cost against the lower bound for thresholds ``lam/s + eps``.

    Thresholds are rounded up to whole server counts. The M/M/c reading needs
    unit power per task.
    """
    if not params.unit_power:
        raise ValueError("cr_asymptotics needs unit power per task")
    bound = universal_lower_bound(params, C)
    rows = []
    for eps in epsilons:
        if eps <= 0:
            raise ValueError(f"epsilon must be > 0, got {eps}")
        threshold = params.offered_load + eps
        c = math.ceil(threshold - 1e-12)
        rho = params.lam / (c * params.s)
        if rho >= 1.0:
            rows.append(AsymptoticsRow(eps, threshold, c, rho, math.nan, bound, math.nan, False))
            continue
        cost = mmc_power_cost(params.lam, params.s, c, C)
        rows.append(AsymptoticsRow(eps, threshold, c, rho, cost, bound, cost - bound, True))
    return rows
