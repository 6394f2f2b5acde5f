"""Non-preemptive offline scheduling through its bin-packing equivalent.

For the uniform instance (every task released at 0, due at ``D``, drawing
power ``p``) a schedule with peak power ``m * p`` is the same thing as a
packing of the durations into ``m`` bins of capacity ``D``: each bin is one
power level, its items laid head to tail.

Exact solvers here are branch-and-bound with explicit node budgets, so an
instance that is too hard fails with :class:`BudgetExceeded` instead of
hanging.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .task_model import (
    REL_TOL,
    CostFunction,
    DemandTask,
    LoadProfile,
    NonpreemptiveSchedule,
    schedule_cost,
    total_load,
)

logger = logging.getLogger(__name__)

DEFAULT_BUDGET = 10_000_000
BUDGET_ENV = "GRIDSCHED_BUDGET"


def default_budget() -> int:
    raw = os.environ.get(BUDGET_ENV)
    if raw is None:
        return DEFAULT_BUDGET
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{BUDGET_ENV} must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise ValueError(f"{BUDGET_ENV} must be a positive integer, got {raw!r}")
    return value


class BudgetExceeded(RuntimeError):
    """Search budget exhausted; ``best`` holds the best solution found so far."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class PackingInstance:
    item_sizes: tuple[float, ...]
    capacity: float
    power_step: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "item_sizes", tuple(float(x) for x in self.item_sizes))
        if self.capacity <= 0 or self.power_step <= 0:
            raise ValueError("capacity and power_step must be > 0")
        if any(x <= 0 for x in self.item_sizes):
            raise ValueError("item sizes must be > 0")

    @property
    def oversized(self) -> list[int]:
        return [i for i, x in enumerate(self.item_sizes) if not self._fits(x, 0.0)]

    def _fits(self, size: float, used: float) -> bool:
        return used + size <= self.capacity * (1 + REL_TOL)

    def tasks(self) -> list[DemandTask]:
        """The uniform scheduling instance: ids are item indices."""
        return [
            DemandTask(i, 0.0, size, self.power_step, self.capacity)
            for i, size in enumerate(self.item_sizes)
        ]

    def lower_bound(self) -> int:
        if not self.item_sizes:
            return 0
        return max(1, math.ceil(sum(self.item_sizes) / self.capacity - REL_TOL))


@dataclass(frozen=True)
class PackingResult:
    bins: tuple[tuple[int, ...], ...]
    power_step: float = 1.0

    @property
    def bin_count(self) -> int:
        return len(self.bins)

    @property
    def peak_power(self) -> float:
        return self.bin_count * self.power_step


def _check_items_fit(inst: PackingInstance) -> None:
    bad = inst.oversized
    if bad:
        raise ValueError(f"items {bad} exceed bin capacity {inst.capacity}")


def first_fit_decreasing(inst: PackingInstance) -> PackingResult:
    """Largest item first into the first bin with room (stable on ties)."""
    _check_items_fit(inst)
    order = sorted(range(len(inst.item_sizes)), key=lambda i: -inst.item_sizes[i])
    bins: list[list[int]] = []
    used: list[float] = []
    for i in order:
        size = inst.item_sizes[i]
        for b, u in enumerate(used):
            if inst._fits(size, u):
                bins[b].append(i)
                used[b] += size
                break
        else:
            bins.append([i])
            used.append(size)
    return PackingResult(tuple(tuple(b) for b in bins), inst.power_step)


class _Search:
    """Depth-first assignment of items (largest first) to at most ``m`` bins."""

    def __init__(self, inst: PackingInstance, budget: int):
        self.inst = inst
        self.order = sorted(range(len(inst.item_sizes)), key=lambda i: -inst.item_sizes[i])
        self.sizes = [inst.item_sizes[i] for i in self.order]
        self.suffix = np.concatenate((np.cumsum(self.sizes[::-1])[::-1], [0.0])).tolist()
        self.budget = budget
        self.nodes = 0

    def pack(self, m: int) -> Optional[list[list[int]]]:
        cap = self.inst.capacity
        slack = cap * REL_TOL
        loads = [0.0] * m
        assign = [-1] * len(self.sizes)
        dead: set[tuple] = set()

        def key(k: int) -> tuple:
            return (k, tuple(sorted(round(x / cap, 12) for x in loads)))

        def rec(k: int) -> bool:
            if k == len(self.sizes):
                return True
            self.nodes += 1
            if self.nodes > self.budget:
                raise BudgetExceeded(f"bin-packing search exceeded {self.budget} nodes")
            free = sum(cap - x for x in loads)
            if self.suffix[k] > free + slack * m:
                return False
            state = key(k)
            if state in dead:
                return False
            size = self.sizes[k]
            tried = set()
            for b in range(m):
                level = loads[b]
                # bins with equal fill are interchangeable
                if level in tried or level + size > cap + slack:
                    continue
                tried.add(level)
                loads[b] = level + size
                assign[k] = b
                if rec(k + 1):
                    return True
                loads[b] = level
                if level == 0.0:
                    break
            dead.add(state)
            return False

        if not rec(0):
            return None
        bins: list[list[int]] = [[] for _ in range(m)]
        for k, b in enumerate(assign):
            bins[b].append(self.order[k])
        return [b for b in bins if b]


def decide_packing(inst: PackingInstance, m: int, budget: Optional[int] = None) -> bool:
    """True iff the items fit into ``m`` bins of the instance capacity."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if inst.oversized:
        logger.warning("items %s exceed capacity %s: infeasible for any m", inst.oversized, inst.capacity)
        return False
    if not inst.item_sizes:
        return True
    if sum(inst.item_sizes) > m * inst.capacity * (1 + REL_TOL):
        return False
    search = _Search(inst, default_budget() if budget is None else budget)
    return search.pack(m) is not None


def exact_min_bins(inst: PackingInstance, budget: Optional[int] = None) -> PackingResult:
    """Provably minimal packing, searching ``m`` upward from the volume bound."""
    _check_items_fit(inst)
    best = first_fit_decreasing(inst)
    if best.bin_count <= inst.lower_bound():
        return best
    search = _Search(inst, default_budget() if budget is None else budget)
    for m in range(inst.lower_bound(), best.bin_count):
        try:
            bins = search.pack(m)
        except BudgetExceeded as exc:
            exc.best = best
            raise
        if bins is not None:
            return PackingResult(tuple(tuple(b) for b in bins), inst.power_step)
    return best


def schedule_from_packing(
    inst: PackingInstance, result: PackingResult
) -> tuple[NonpreemptiveSchedule, LoadProfile]:
    """Lay each bin's items head to tail from time 0; one bin per power level."""
    starts: dict[int, float] = {}
    for b in result.bins:
        t = 0.0
        for i in b:
            starts[i] = t
            t += inst.item_sizes[i]
    sched = NonpreemptiveSchedule(starts)
    return sched, total_load(inst.tasks(), sched, inst.capacity)


def quantize_powers(tasks: Sequence[DemandTask], quantum: float) -> list[DemandTask]:
    """Split each task of power ``n * quantum`` into ``n`` copies of power ``quantum``.

    Copies keep the original timing and get consecutive fresh ids in input
    order, so copies of one task are contiguous.
    """
    if quantum <= 0:
        raise ValueError(f"quantum must be > 0, got {quantum}")
    out = []
    next_id = 0
    for task in tasks:
        ratio = task.power / quantum
        n = round(ratio)
        if n < 1 or abs(ratio - n) > REL_TOL * max(1.0, ratio):
            raise ValueError(f"task {task.id}: power {task.power} is not a multiple of {quantum}")
        for _ in range(n):
            out.append(DemandTask(next_id, task.arrival, task.duration, quantum, task.deadline))
            next_id += 1
    return out


@dataclass(frozen=True)
class NonpreemptiveResult:
    schedule: NonpreemptiveSchedule
    objective: float
    nodes: int


def exact_nonpreemptive_min_cost(
    tasks: Sequence[DemandTask],
    C: CostFunction,
    horizon: float,
    grid_step: float,
    budget: Optional[int] = None,
) -> NonpreemptiveResult:
    """Minimum-cost non-preemptive schedule over start times on a grid.

    Start times range over ``a_n, a_n + grid_step, ..., <= d_n - s_n``. Partial
    cost is a valid lower bound because ``C`` is nondecreasing, which drives
    the pruning. Among equal-cost optima the lexicographically smallest
    start vector (in input task order) wins.
    """
    if grid_step <= 0:
        raise ValueError(f"grid_step must be > 0, got {grid_step}")
    budget = default_budget() if budget is None else budget
    tasks = list(tasks)
    total_load(tasks, NonpreemptiveSchedule({t.id: t.arrival for t in tasks}), horizon)

    choices = []
    for task in tasks:
        k_max = int(math.floor(task.slack / grid_step + REL_TOL))
        choices.append([task.arrival + k * grid_step for k in range(k_max + 1)])

    cuts = {0.0, float(horizon)}
    for task, starts in zip(tasks, choices):
        for t0 in starts:
            cuts.add(t0)
            cuts.add(min(t0 + task.duration, horizon))
    grid = np.array(sorted(cuts))
    lengths = np.diff(grid)
    spans = [
        [(int(np.searchsorted(grid, t0)), int(np.searchsorted(grid, min(t0 + task.duration, horizon))))
         for t0 in starts]
        for task, starts in zip(tasks, choices)
    ]

    load = np.zeros(len(lengths))
    base = schedule_cost(C, LoadProfile.zeros(horizon))
    best_cost = math.inf
    best_pick: Optional[list[int]] = None
    pick = [0] * len(tasks)
    nodes = 0
    eps = 1e-12

    def beats(cost: float) -> bool:
        return best_pick is None or cost < best_cost - eps * max(1.0, abs(best_cost))

    def rec(n: int, cost: float) -> None:
        nonlocal best_cost, best_pick, nodes
        if n == len(tasks):
            if beats(cost):
                best_cost, best_pick = cost, list(pick)
            return
        p = tasks[n].power
        for j, (i0, i1) in enumerate(spans[n]):
            nodes += 1
            if nodes > budget:
                raise BudgetExceeded(f"grid search exceeded {budget} nodes")
            seg = load[i0:i1]
            delta = float(np.dot(lengths[i0:i1], C.evaluate(seg + p) - C.evaluate(seg)))
            if not beats(cost + delta):
                continue
            seg += p
            pick[n] = j
            rec(n + 1, cost + delta)
            seg -= p

    def result() -> Optional[NonpreemptiveResult]:
        if best_pick is None:
            return None
        starts = {t.id: choices[n][best_pick[n]] for n, t in enumerate(tasks)}
        sched = NonpreemptiveSchedule(starts)
        return NonpreemptiveResult(sched, schedule_cost(C, total_load(tasks, sched, horizon)), nodes)

    try:
        rec(0, base)
    except BudgetExceeded as exc:
        exc.best = result()
        raise
    return result()
