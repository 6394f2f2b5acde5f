"""Core domain types: demand tasks, convex cost functions, load profiles and schedules.

Everything here is immutable after construction. Profiles are piecewise
constant on right-open segments ``[t_i, t_{i+1})`` and are canonicalized
(adjacent equal values merged) whenever they are built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

REL_TOL = 1e-9


class InfeasibleScheduleError(ValueError):
    """A schedule violates a task's window, bounds or mass constraint."""

    def __init__(self, task_id: int, reason: str):
        self.task_id = task_id
        self.reason = reason
        super().__init__(f"task {task_id}: {reason}")


@dataclass(frozen=True)
class DemandTask:
    """One power demand.

    Attributes:
        id: unique integer identifier.
        arrival: generation time ``a``.
        duration: active time required ``s`` (> 0).
        power: instantaneous power draw ``p`` while active (> 0).
        deadline: completion deadline ``d`` with ``d >= a + s``.
    """

    id: int
    arrival: float
    duration: float
    power: float
    deadline: float

    def __post_init__(self) -> None:
        for name in ("arrival", "duration", "power", "deadline"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"task {self.id}: {name} must be finite")
        if self.arrival < 0:
            raise ValueError(f"task {self.id}: arrival must be >= 0, got {self.arrival}")
        if self.duration <= 0:
            raise ValueError(f"task {self.id}: duration must be > 0, got {self.duration}")
        if self.power <= 0:
            raise ValueError(f"task {self.id}: power must be > 0, got {self.power}")
        window = self.deadline - self.arrival
        if window < self.duration * (1 - REL_TOL):
            raise ValueError(
                f"task {self.id}: window {window} shorter than duration {self.duration}"
            )

    @property
    def slack(self) -> float:
        """Latest admissible start delay ``d - s - a`` (clamped at 0)."""
        return max(0.0, self.deadline - self.duration - self.arrival)

    @property
    def window(self) -> float:
        return self.deadline - self.arrival

    @property
    def latest_start(self) -> float:
        return self.arrival + self.slack

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "arrival": self.arrival,
            "duration": self.duration,
            "power": self.power,
            "deadline": self.deadline,
        }


# ---------------------------------------------------------------------------
# Cost functions


class CostFunction:
    """Increasing convex instantaneous cost of total power."""

    def evaluate(self, x):
        """Vectorized evaluation without argument checks."""
        raise NotImplementedError

    def derivative(self, x):
        """Right derivative (the right segment's slope at kinks)."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def __call__(self, x):
        return eval_cost(self, x)


@dataclass(frozen=True)
class PiecewiseLinearCost(CostFunction):
    """``C(x) = max_i (k_i x + b_i)`` with nondecreasing, nonnegative slopes."""

    segments: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        segs = tuple((float(k), float(b)) for k, b in self.segments)
        if not segs:
            raise ValueError("piecewise-linear cost needs at least one segment")
        slopes = [k for k, _ in segs]
        if any(k < 0 for k in slopes):
            raise ValueError(f"slopes must be nonnegative, got {slopes}")
        if any(k2 < k1 for k1, k2 in zip(slopes, slopes[1:])):
            raise ValueError(f"slopes must be nondecreasing, got {slopes}")
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "_k", np.array(slopes))
        object.__setattr__(self, "_b", np.array([b for _, b in segs]))

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        out = np.max(np.multiply.outer(x, self._k) + self._b, axis=-1)
        return float(out) if out.ndim == 0 else out

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        lines = np.multiply.outer(x, self._k) + self._b
        top = lines.max(axis=-1, keepdims=True)
        active = lines >= top - 1e-12 * np.maximum(1.0, np.abs(top))
        out = np.where(active, self._k, -np.inf).max(axis=-1)
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        return {"type": "piecewise", "segments": [list(s) for s in self.segments]}


@dataclass(frozen=True)
class QuadraticCost(CostFunction):
    """``C(x) = c2 x^2 + c1 x + c0`` with ``c2, c1 >= 0``."""

    c2: float = 1.0
    c1: float = 0.0
    c0: float = 0.0

    def __post_init__(self) -> None:
        if self.c2 < 0 or self.c1 < 0:
            raise ValueError(f"need c2 >= 0 and c1 >= 0, got c2={self.c2}, c1={self.c1}")

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        out = (self.c2 * x + self.c1) * x + self.c0
        return float(out) if out.ndim == 0 else out

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        out = 2.0 * self.c2 * x + self.c1
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        return {"type": "quadratic", "c2": self.c2, "c1": self.c1, "c0": self.c0}


def eval_cost(C: CostFunction, x):
    """Cost per unit time at power ``x`` (scalar or array, must be >= 0)."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError(f"power must be nonnegative, got {x!r}")
    return C.evaluate(arr)


def cost_from_dict(data: Mapping) -> CostFunction:
    """Build a cost function from its JSON object form."""
    kind = data.get("type")
    if kind == "piecewise":
        return PiecewiseLinearCost(tuple(tuple(s) for s in data["segments"]))
    if kind == "quadratic":
        return QuadraticCost(
            float(data.get("c2", 0.0)), float(data.get("c1", 0.0)), float(data.get("c0", 0.0))
        )
    raise ValueError(f"unknown cost function type {kind!r}")


# ---------------------------------------------------------------------------
# Load profiles


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LoadProfile:
    """Nonnegative piecewise-constant function on ``[0, horizon]``.

    ``values[i]`` holds on ``[breakpoints[i], breakpoints[i+1])``.
    """

    breakpoints: np.ndarray
    values: np.ndarray
    canonical: bool = field(default=True, repr=False)

    def __post_init__(self) -> None:
        bp = np.asarray(self.breakpoints, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if bp.ndim != 1 or vals.ndim != 1 or len(bp) != len(vals) + 1:
            raise ValueError("need len(breakpoints) == len(values) + 1")
        if len(vals) == 0:
            raise ValueError("profile needs at least one segment")
        if bp[0] != 0.0:
            raise ValueError(f"first breakpoint must be 0, got {bp[0]}")
        if np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ValueError("profile values must be finite and nonnegative")
        if self.canonical:
            keep = np.concatenate(([True], vals[1:] != vals[:-1]))
            vals = vals[keep]
            bp = np.concatenate((bp[:-1][keep], bp[-1:]))
        object.__setattr__(self, "breakpoints", _frozen(bp))
        object.__setattr__(self, "values", _frozen(vals))

    @classmethod
    def zeros(cls, horizon: float) -> "LoadProfile":
        if horizon <= 0:
            raise ValueError(f"horizon must be > 0, got {horizon}")
        return cls(np.array([0.0, horizon]), np.array([0.0]))

    @classmethod
    def rectangle(cls, horizon: float, start: float, end: float, height: float) -> "LoadProfile":
        """``height`` on ``[start, end)``, zero elsewhere."""
        pts = sorted({0.0, start, end, horizon})
        vals = [height if start <= lo and hi <= end else 0.0 for lo, hi in zip(pts, pts[1:])]
        return cls(np.array(pts), np.array(vals))

    @property
    def horizon(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    def value_at(self, t: float) -> float:
        if t < 0 or t > self.horizon:
            raise ValueError(f"t={t} outside [0, {self.horizon}]")
        i = min(np.searchsorted(self.breakpoints, t, side="right") - 1, len(self.values) - 1)
        return float(self.values[i])

    def sample(self, points: np.ndarray) -> np.ndarray:
        """Values at the given times (right-continuous)."""
        idx = np.searchsorted(self.breakpoints, points, side="right") - 1
        return self.values[np.clip(idx, 0, len(self.values) - 1)]

    def refine(self, points: Iterable[float]) -> "LoadProfile":
        """Same function with extra breakpoints (not canonicalized)."""
        pts = np.array([p for p in points if 0.0 < p < self.horizon], dtype=float)
        bp = np.unique(np.concatenate((self.breakpoints, pts)))
        return LoadProfile(bp, self.sample(bp[:-1]), canonical=False)

    def integral(self) -> float:
        return float(np.dot(self.lengths, self.values))

    def max(self) -> float:
        return float(self.values.max())

    def scale(self, c: float) -> "LoadProfile":
        return LoadProfile(self.breakpoints, self.values * c)

    def __add__(self, other: "LoadProfile") -> "LoadProfile":
        return sum_profiles([self, other], self.horizon)

    def to_dict(self) -> dict:
        return {"breakpoints": self.breakpoints.tolist(), "values": self.values.tolist()}


def sum_profiles(profiles: Sequence[LoadProfile], horizon: float) -> LoadProfile:
    """Pointwise sum over the union of breakpoints."""
    if not profiles:
        return LoadProfile.zeros(horizon)
    for prof in profiles:
        if not math.isclose(prof.horizon, horizon, rel_tol=REL_TOL):
            raise ValueError(f"profile horizon {prof.horizon} != {horizon}")
    bp = np.unique(np.concatenate([p.breakpoints[:-1] for p in profiles] + [[horizon]]))
    left = bp[:-1]
    total = np.zeros(len(left))
    for prof in profiles:
        total += prof.sample(left)
    return LoadProfile(bp, total)


# ---------------------------------------------------------------------------
# Schedules


@dataclass(frozen=True)
class PreemptiveSchedule:
    """Fractional allocation ``x_n(t)`` in ``[0, 1]`` per task id."""

    allocations: Mapping[int, LoadProfile]


@dataclass(frozen=True)
class NonpreemptiveSchedule:
    """Start time ``t_n`` per task id."""

    starts: Mapping[int, float]

    def delays(self, tasks: Iterable[DemandTask]) -> dict[int, float]:
        return {t.id: self.starts[t.id] - t.arrival for t in tasks}


Schedule = Union[PreemptiveSchedule, NonpreemptiveSchedule]


def _check_windows(tasks: Sequence[DemandTask], horizon: float) -> None:
    seen = set()
    for task in tasks:
        if task.id in seen:
            raise ValueError(f"duplicate task id {task.id}")
        seen.add(task.id)
        if task.deadline > horizon * (1 + REL_TOL):
            raise InfeasibleScheduleError(
                task.id, f"window [{task.arrival}, {task.deadline}] exceeds horizon {horizon}"
            )


def check_allocation(task: DemandTask, alloc: LoadProfile) -> None:
    """Raise :class:`InfeasibleScheduleError` unless ``alloc`` serves ``task``."""
    tol = REL_TOL * max(1.0, task.window)
    lo, hi = alloc.breakpoints[:-1], alloc.breakpoints[1:]
    nz = alloc.values > 0
    outside = nz & ((lo < task.arrival - tol) | (hi > task.deadline + tol))
    if np.any(outside):
        raise InfeasibleScheduleError(task.id, "allocation outside [arrival, deadline]")
    if np.any(alloc.values > 1 + REL_TOL):
        raise InfeasibleScheduleError(task.id, "allocation exceeds 1")
    mass = alloc.integral()
    if abs(mass - task.duration) > REL_TOL * task.duration:
        raise InfeasibleScheduleError(task.id, f"allocated mass {mass} != duration {task.duration}")


def total_load(tasks: Sequence[DemandTask], sched: Schedule, horizon: float) -> LoadProfile:
    """Total power ``sum_n p_n x_n(t)`` on ``[0, horizon]`` after validating ``sched``."""
    tasks = list(tasks)
    _check_windows(tasks, horizon)
    if not tasks:
        return LoadProfile.zeros(horizon)

    if isinstance(sched, PreemptiveSchedule):
        parts = []
        for task in tasks:
            alloc = sched.allocations.get(task.id)
            if alloc is None:
                raise InfeasibleScheduleError(task.id, "no allocation")
            check_allocation(task, alloc)
            parts.append(alloc.scale(task.power))
        return sum_profiles(parts, horizon)

    if isinstance(sched, NonpreemptiveSchedule):
        starts, ends, powers = [], [], []
        for task in tasks:
            t0 = sched.starts.get(task.id)
            if t0 is None:
                raise InfeasibleScheduleError(task.id, "no start time")
            tol = REL_TOL * max(1.0, task.window)
            if t0 < task.arrival - tol or t0 > task.latest_start + tol:
                raise InfeasibleScheduleError(
                    task.id, f"start {t0} outside [{task.arrival}, {task.latest_start}]"
                )
            starts.append(t0)
            ends.append(min(t0 + task.duration, horizon))
            powers.append(task.power)
        bp = np.unique(np.concatenate(([0.0, horizon], starts, ends)))
        delta = np.zeros(len(bp))
        np.add.at(delta, np.searchsorted(bp, starts), powers)
        np.subtract.at(delta, np.searchsorted(bp, ends), powers)
        vals = np.maximum(np.cumsum(delta)[:-1], 0.0)
        return LoadProfile(bp, vals)

    raise TypeError(f"unsupported schedule type {type(sched).__name__}")


def schedule_cost(C: CostFunction, load: LoadProfile) -> float:
    """``integral C(l(t)) dt``, exact for piecewise-constant ``l``."""
    return float(np.dot(load.lengths, np.atleast_1d(C.evaluate(load.values))))


# ---------------------------------------------------------------------------
# JSON workload helpers


def tasks_from_json(records: Iterable[Mapping]) -> list[DemandTask]:
    return [
        DemandTask(
            id=int(r["id"]),
            arrival=float(r["arrival"]),
            duration=float(r["duration"]),
            power=float(r["power"]),
            deadline=float(r["deadline"]),
        )
        for r in records
    ]


def tasks_to_json(tasks: Iterable[DemandTask]) -> list[dict]:
    return [t.to_dict() for t in tasks]


def random_tasks(
    n: int, horizon: float, seed: int, resolution: float = 0.25, powers=(0.5, 1.0, 1.5, 2.0)
) -> list[DemandTask]:
    """Random feasible workload with all times on a ``resolution`` grid.

    Windows lie inside ``[0, horizon]`` and durations fit their windows.
    """
    rng = np.random.default_rng(seed)
    steps = int(round(horizon / resolution))
    if steps < 1:
        raise ValueError("horizon must span at least one resolution step")
    tasks = []
    for i in range(n):
        a, d = sorted(rng.choice(steps + 1, size=2, replace=False))
        dur = int(rng.integers(1, d - a + 1))
        tasks.append(
            DemandTask(i, a * resolution, dur * resolution, float(rng.choice(powers)), d * resolution)
        )
    return tasks
