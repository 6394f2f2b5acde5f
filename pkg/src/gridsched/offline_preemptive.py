"""Offline preemptive scheduling by iterated single-task water-filling.

Each task's fractional allocation is repeatedly replaced by its best response
to the load of all other tasks. The best response raises the total load to a
common water level wherever the task is partially on, which is optimal for
any convex nondecreasing cost. Sweeping tasks round-robin drives the total
cost down to the optimum of the relaxed (fractional) problem.

Since every best response is constant between the window endpoints of the
tasks, the solver works on the elementary intervals cut by
``{0, T} U {a_n, d_n}`` and only materializes :class:`LoadProfile` objects on
output.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .task_model import (
    REL_TOL,
    CostFunction,
    DemandTask,
    InfeasibleScheduleError,
    LoadProfile,
    PreemptiveSchedule,
    schedule_cost,
)

logger = logging.getLogger(__name__)

MAX_BISECTION_ITERS = 200


class SweepOrder(enum.Enum):
    SEQUENTIAL = "sequential"
    RANDOM_PERMUTATION = "random"


@dataclass(frozen=True)
class BalanceConfig:
    sweep_order: SweepOrder = SweepOrder.SEQUENTIAL
    seed: int = 0
    objective_tolerance: float = 1e-8
    max_rounds: int = 1000
    waterlevel_tolerance: float = 1e-10

    def __post_init__(self) -> None:
        if self.objective_tolerance <= 0 or self.waterlevel_tolerance <= 0:
            raise ValueError("tolerances must be > 0")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")


@dataclass(frozen=True)
class BalanceResult:
    """Outcome of :func:`solve`.

    ``history`` holds the objective before the first update followed by the
    objective after every single best-response step.
    """

    schedule: PreemptiveSchedule
    load: LoadProfile
    objective: float
    rounds_used: int
    converged: bool
    history: tuple[float, ...] = field(default=(), repr=False)


@dataclass(frozen=True)
class FractionalEntry:
    task_id: int
    fractional_mass: float
    fractional_time: float


def _check_fractional_feasible(task: DemandTask, horizon: float) -> None:
    if task.deadline > horizon * (1 + REL_TOL):
        raise InfeasibleScheduleError(task.id, f"deadline {task.deadline} beyond horizon {horizon}")
    if task.duration > task.window * (1 + REL_TOL):
        raise InfeasibleScheduleError(task.id, "duration exceeds window")


def water_fill(
    lengths: np.ndarray, other: np.ndarray, power: float, duration: float, tol: float = 1e-10
) -> tuple[np.ndarray, float]:
    """Water-filling on segments of given lengths.

    Returns ``(x, level)`` with ``x = clip((level - other) / power, 0, 1)`` and
    ``sum(lengths * x) == duration``. The caller guarantees
    ``duration <= sum(lengths)``.
    """
    window = float(lengths.sum())
    if duration >= window * (1 - 1e-12):
        return np.ones_like(other), float(np.max(other) + power)

    kinks = np.concatenate((other, other + power))

    def mass(level: float) -> float:
        return float(np.dot(lengths, np.clip((level - other) / power, 0.0, 1.0)))

    lo, hi = float(other.min()), float(other.max()) + power
    m_lo, m_hi = mass(lo), mass(hi)
    assert m_lo <= duration <= m_hi, "water level not bracketed"
    for _ in range(MAX_BISECTION_ITERS):
        if not np.any((kinks > lo) & (kinks < hi)):
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        m_mid = mass(mid)
        if m_mid < duration:
            lo, m_lo = mid, m_mid
        else:
            hi, m_hi = mid, m_mid
    # mass() is linear between kinks: interpolate inside the final bracket
    level = lo if m_hi == m_lo else lo + (duration - m_lo) * (hi - lo) / (m_hi - m_lo)
    x = np.clip((level - other) / power, 0.0, 1.0)
    err = float(np.dot(lengths, x)) - duration
    if abs(err) > tol:
        raise ArithmeticError(f"water-filling mass error {err:.3e} above tolerance")
    return x, level


def best_response(
    task: DemandTask, other_load: LoadProfile, C: Optional[CostFunction] = None, tol: float = 1e-10
) -> tuple[LoadProfile, float]:
    """Cost-minimizing allocation of ``task`` against the load of everyone else.

    Returns the allocation profile (on ``[0, T]``) and the water level.
    ``C`` is accepted for interface symmetry; the water-filling solution is
    optimal for every convex nondecreasing cost, so it is not consulted.
    """
    horizon = other_load.horizon
    _check_fractional_feasible(task, horizon)
    prof = other_load.refine([task.arrival, task.deadline])
    lo, hi = prof.breakpoints[:-1], prof.breakpoints[1:]
    inside = (lo >= task.arrival - REL_TOL * max(1.0, horizon)) & (
        hi <= task.deadline + REL_TOL * max(1.0, horizon)
    )
    x_in, level = water_fill(prof.lengths[inside], prof.values[inside], task.power, task.duration, tol)
    x = np.zeros(len(prof.values))
    x[inside] = x_in
    return LoadProfile(prof.breakpoints, x), level


def _cost_on_grid(C: CostFunction, lengths: np.ndarray, load: np.ndarray) -> float:
    return float(np.dot(lengths, np.atleast_1d(C.evaluate(load))))


def solve(
    tasks: Sequence[DemandTask],
    C: CostFunction,
    horizon: float,
    config: BalanceConfig = BalanceConfig(),
) -> BalanceResult:
    """Minimize ``integral C(l(t)) dt`` over fractional preemptive schedules."""
    tasks = list(tasks)
    for task in tasks:
        _check_fractional_feasible(task, horizon)
    if len({t.id for t in tasks}) != len(tasks):
        raise ValueError("duplicate task ids")

    cuts = [0.0, horizon] + [t.arrival for t in tasks] + [t.deadline for t in tasks]
    grid = np.unique(np.clip(cuts, 0.0, horizon))
    lengths = np.diff(grid)
    mid = 0.5 * (grid[:-1] + grid[1:])
    masks = [(mid > t.arrival) & (mid < t.deadline) for t in tasks]
    powers = np.array([t.power for t in tasks])

    # start from each task spread uniformly over its window
    X = np.zeros((len(tasks), len(lengths)))
    for n, task in enumerate(tasks):
        X[n, masks[n]] = task.duration / lengths[masks[n]].sum()
    load = powers @ X if tasks else np.zeros(len(lengths))

    objective = _cost_on_grid(C, lengths, load)
    history = [objective]
    # flat stretches of a piecewise-linear C can hide progress; also watch sum(len * load^2)
    spread = float(np.dot(lengths, load * load))
    rng = np.random.default_rng(config.seed)
    converged = False
    rounds = 0
    for rounds in range(1, config.max_rounds + 1):
        start, start_spread = objective, spread
        order = range(len(tasks))
        if config.sweep_order is SweepOrder.RANDOM_PERMUTATION:
            order = rng.permutation(len(tasks))
        for n in order:
            m = masks[n]
            other = load[m] - powers[n] * X[n, m]
            x_new, _ = water_fill(
                lengths[m], np.maximum(other, 0.0), powers[n], tasks[n].duration,
                config.waterlevel_tolerance,
            )
            X[n, m] = x_new
            load[m] = other + powers[n] * x_new
            objective = _cost_on_grid(C, lengths, load)
            history.append(objective)
        spread = float(np.dot(lengths, load * load))
        tol = config.objective_tolerance
        if start - objective <= tol * max(abs(start), 1e-300) and (
            start_spread - spread <= tol * max(start_spread, 1e-300)
        ):
            converged = True
            break
    if not converged:
        logger.warning("load balancing hit max_rounds=%d without converging", config.max_rounds)

    # recompute the load from scratch to shed accumulated rounding
    load = powers @ X if tasks else np.zeros(len(lengths))
    allocations = {t.id: LoadProfile(grid, X[n]) for n, t in enumerate(tasks)}
    profile = LoadProfile(grid, np.maximum(load, 0.0))
    return BalanceResult(
        schedule=PreemptiveSchedule(allocations),
        load=profile,
        objective=schedule_cost(C, profile),
        rounds_used=rounds,
        converged=converged,
        history=tuple(history),
    )


def rounding_hint(result: BalanceResult, tol: float = 1e-9) -> list[FractionalEntry]:
    """Tasks whose allocation takes values strictly between 0 and 1 somewhere."""
    report = []
    for task_id, alloc in sorted(result.schedule.allocations.items()):
        frac = (alloc.values > tol) & (alloc.values < 1 - tol)
        if np.any(frac):
            report.append(
                FractionalEntry(
                    task_id,
                    float(np.dot(alloc.lengths[frac], alloc.values[frac])),
                    float(alloc.lengths[frac].sum()),
                )
            )
    return report
