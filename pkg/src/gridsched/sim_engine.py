"""Discrete-event simulation of online demand scheduling under threshold policies.

Demands arrive as a Poisson process, run for an exponential duration once
activated and, while postponed, carry an exponential deadline timer that
forces activation when it fires. A policy decides on arrival whether to
activate or postpone, and may release postponed demands when an active one
completes.

Randomness comes from independent Philox streams keyed by
``(seed, replication, role)`` so a change in how one stream is consumed never
shifts another. Between events the total power ``P(t)`` is constant, so cost
and power integrals are accumulated exactly.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import heapq
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from scipy import stats

from .stochastic_analysis import StochasticParams
from .task_model import CostFunction, PiecewiseLinearCost, QuadraticCost


class Decision(enum.Enum):
    ACTIVATE = "activate"
    POSTPONE = "postpone"


# ---------------------------------------------------------------------------
# Policies


@dataclass(frozen=True)
class DefaultPolicy:
    """Activate every demand on arrival."""

    name = "default"

    def admits(self, power: float, queued: int) -> bool:
        return True

    def release(self, power_before: float, power_after: float, queue: "OrderedDict[int, float]") -> list[int]:
        return []

    @property
    def threshold(self) -> float:
        return math.nan


@dataclass(frozen=True)
class CRPolicy:
    """Controlled release: admit while ``P < threshold``; refill up to it on completions.

    With ``release_one`` at most one postponed demand is released per completion.
    """

    threshold: float
    release_one: bool = False
    name = "cr"

    def __post_init__(self) -> None:
        if not self.threshold >= 0:
            raise ValueError(f"threshold must be >= 0, got {self.threshold}")

    def admits(self, power: float, queued: int) -> bool:
        return power < self.threshold

    def release(self, power_before, power_after, queue) -> list[int]:
        out = []
        p = power_after
        for task_id, task_power in queue.items():
            if not p < self.threshold:
                break
            out.append(task_id)
            p += task_power
            if self.release_one:
                break
        return out


@dataclass(frozen=True)
class TPPolicy:
    """Threshold postponement with switching curve ``P_b(Q)``.

    ``steps`` is a sequence of ``(q, threshold)``: for ``Q >= q`` the threshold
    is the value of the last step with ``q <= Q``; below the first step it is
    ``base``. A demand is activated on arrival iff ``P < P_b(Q)``, otherwise it
    waits for its deadline.
    """

    base: float
    steps: tuple[tuple[int, float], ...] = ()
    name = "tp"

    def __post_init__(self) -> None:
        steps = tuple(sorted((int(q), float(v)) for q, v in self.steps))
        object.__setattr__(self, "steps", steps)
        levels = [self.base] + [v for _, v in steps]
        if any(v < 0 for v in levels):
            raise ValueError("thresholds must be >= 0")
        if any(b < a for a, b in zip(levels, levels[1:])):
            raise ValueError(f"switching curve must be nondecreasing in Q, got {levels}")
        if len({q for q, _ in steps}) != len(steps) or any(q < 0 for q, _ in steps):
            raise ValueError("switching curve breakpoints must be distinct and >= 0")

    def threshold_at(self, queued: int) -> float:
        value = self.base
        for q, v in self.steps:
            if queued < q:
                break
            value = v
        return value

    @property
    def threshold(self) -> float:
        return self.base

    def admits(self, power: float, queued: int) -> bool:
        return power < self.threshold_at(queued)

    def release(self, power_before, power_after, queue) -> list[int]:
        return []


@dataclass(frozen=True)
class ETPPolicy:
    """Enhanced threshold postponement.

    Admit iff ``P <= threshold``; when a completion happens from a state with
    ``P <= threshold``, one postponed demand (FIFO) takes its place.
    """

    threshold: float
    name = "etp"

    def __post_init__(self) -> None:
        if not self.threshold >= 0:
            raise ValueError(f"threshold must be >= 0, got {self.threshold}")

    def admits(self, power: float, queued: int) -> bool:
        return power <= self.threshold

    def release(self, power_before, power_after, queue) -> list[int]:
        if queue and power_before <= self.threshold:
            return [next(iter(queue))]
        return []


PolicySpec = Union[DefaultPolicy, CRPolicy, TPPolicy, ETPPolicy]

POLICY_NAMES = ("default", "cr", "tp", "etp")


def make_policy(name: str, threshold: Optional[float] = None) -> PolicySpec:
    name = name.lower()
    if name == "default":
        return DefaultPolicy()
    if name not in POLICY_NAMES:
        raise ValueError(f"unknown policy {name!r}; expected one of {POLICY_NAMES}")
    if threshold is None:
        raise ValueError(f"policy {name!r} needs a threshold")
    if name == "cr":
        return CRPolicy(float(threshold))
    if name == "tp":
        return TPPolicy(float(threshold))
    return ETPPolicy(float(threshold))


# ---------------------------------------------------------------------------
# State and the three policy hooks


@dataclass
class SimState:
    """Mutable simulator state: total active power and the FIFO of postponed demands."""

    clock: float = 0.0
    power: float = 0.0
    queue: "OrderedDict[int, float]" = field(default_factory=OrderedDict)

    @property
    def queued(self) -> int:
        return len(self.queue)


@dataclass(frozen=True)
class TaskRecord:
    id: int
    power: float = 1.0


def policy_on_arrival(state: SimState, policy: PolicySpec, task: TaskRecord) -> Decision:
    return Decision.ACTIVATE if policy.admits(state.power, state.queued) else Decision.POSTPONE


def policy_on_completion(state: SimState, policy: PolicySpec, power_before: float) -> list[int]:
    """Postponed task ids to activate after a completion dropped power from ``power_before``."""
    return policy.release(power_before, state.power, state.queue)


def policy_on_deadline(state: SimState, policy: PolicySpec, task_id: int) -> Decision:
    # expiry forces activation whatever the thresholds say
    return Decision.ACTIVATE


# ---------------------------------------------------------------------------
# Configuration and results


@dataclass(frozen=True)
class SimConfig:
    params: StochasticParams
    policy: PolicySpec
    cost: CostFunction
    horizon: float
    warmup_fraction: float = 0.1
    seed: int = 0
    batches: int = 20
    replications: int = 1

    def __post_init__(self) -> None:
        if not self.horizon > 0:
            raise ValueError(f"horizon must be > 0, got {self.horizon}")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError(f"warmup_fraction must be in [0, 1), got {self.warmup_fraction}")
        if self.batches < 10:
            raise ValueError(f"need at least 10 batches, got {self.batches}")
        if self.replications < 1:
            raise ValueError(f"need at least one replication, got {self.replications}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if isinstance(self.policy, TPPolicy) and self.params.d <= 0:
            raise ValueError("TP postpones until deadline expiry and needs d > 0")


@dataclass(frozen=True)
class SimResult:
    avg_cost: float
    avg_power: float
    ci_halfwidth: float
    power_ci_halfwidth: float
    peak_power: float
    postponed_fraction: float
    deadline_activation_rate: float
    occupancy: tuple[tuple[float, float], ...]
    counters: dict
    replication_costs: tuple[float, ...]

    def occupancy_pmf(self) -> dict[float, float]:
        return dict(self.occupancy)


@dataclass
class Trace:
    """Event log: state ``(P, Q)`` right after each event.

    Event codes: ``I`` initial state, ``A`` arrival activated, ``W`` arrival
    postponed, ``C`` completion, ``R`` completion that released postponed
    demands, ``X`` deadline expiry activation.
    """

    times: list = field(default_factory=list)
    events: list = field(default_factory=list)
    powers: list = field(default_factory=list)
    queues: list = field(default_factory=list)
    end_time: float = 0.0

    def append(self, t: float, event: str, power: float, queued: int) -> None:
        self.times.append(t)
        self.events.append(event)
        self.powers.append(power)
        self.queues.append(queued)

    def __len__(self) -> int:
        return len(self.times)


TRACE_HEADER = ("time", "event", "P", "Q")


def write_trace(trace: Trace, path) -> None:
    """Write ``time,event,P,Q`` lines; the final line has event ``E`` at the end time."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for row in zip(trace.times, trace.events, trace.powers, trace.queues):
            w.writerow((repr(float(row[0])), row[1], repr(float(row[2])), row[3]))
        last_p = trace.powers[-1] if trace.powers else 0.0
        last_q = trace.queues[-1] if trace.queues else 0
        w.writerow((repr(float(trace.end_time)), "E", repr(float(last_p)), last_q))


def read_trace(path) -> Trace:
    trace = Trace()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != TRACE_HEADER:
            raise ValueError(f"unexpected trace header {header}")
        for t, ev, p, q in reader:
            if ev == "E":
                trace.end_time = float(t)
                break
            trace.append(float(t), ev, float(p), int(q))
    return trace


# ---------------------------------------------------------------------------
# Random streams

_ROLES = {"arrival": 0, "duration": 1, "deadline": 2, "power": 3}


class _StreamExhausted(Exception):
    pass


@dataclass
class _Draws:
    """Pre-drawn streams for one replication: unit exponentials and power classes.

    Each role has its own Philox generator keyed by ``(seed, replication, role)``.
    Regrowing to a longer length keeps the prefix, so results never depend on
    the initial guess of how many draws are needed.
    """

    inter: np.ndarray
    dur: np.ndarray
    dl: np.ndarray
    cls: np.ndarray

    @classmethod
    def make(cls, config: SimConfig, replication: int, n: int) -> "_Draws":
        def gen(role: str) -> np.random.Generator:
            key = [config.seed & 0xFFFFFFFF, config.seed >> 32, replication, _ROLES[role]]
            return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))

        weights = np.array([w for _, w in config.params.power_dist])
        if len(weights) > 1:
            classes = gen("power").choice(len(weights), size=n, p=weights).astype(np.int64)
        else:
            classes = np.zeros(1, dtype=np.int64)
        return cls(
            gen("arrival").standard_exponential(n),
            gen("duration").standard_exponential(n),
            gen("deadline").standard_exponential(n),
            classes,
        )


def _initial_draws(config: SimConfig) -> int:
    mean = config.params.lam * config.horizon
    return int(mean + 6.0 * math.sqrt(mean) + 64)


# ---------------------------------------------------------------------------
# Engine

_COMPLETION, _DEADLINE = 0, 1
_EVENT_CODES = "IAWCRX"


@dataclass
class _RepStats:
    batch_cost: np.ndarray
    batch_power: np.ndarray
    peak: float
    occupancy: dict
    counters: dict
    post_arrivals: int
    post_postponed: int
    post_deadline: int


def _replicate_python(config: SimConfig, draws: _Draws, trace: Optional[Trace]) -> _RepStats:
    params, policy, C = config.params, config.policy, config.cost
    T = float(config.horizon)
    warm = config.warmup_fraction * T
    boundaries = _boundaries(config).tolist()
    n_batches = config.batches
    batch_cost = [0.0] * n_batches
    batch_power = [0.0] * n_batches

    powers = [p for p, _ in params.power_dist]
    single = len(powers) == 1
    counts = [0] * len(powers)
    index_of = {p: k for k, p in enumerate(powers)}
    inter, dur, dl, cls = (a.tolist() for a in (draws.inter, draws.dur, draws.dl, draws.cls))
    i_arr = i_dur = i_dl = i_cls = 0
    lam, s_rate, d_rate = params.lam, params.s, params.d

    state = SimState()
    queue = state.queue
    heap: list = []
    seq = 0
    cost_cache: dict = {}
    occupancy: dict = {}
    peak = 0.0
    batch = 0
    n_arr = n_done = n_post = n_deadline = n_release = 0
    post_arr = post_post = post_deadline = 0

    def total_power() -> float:
        if single:
            return counts[0] * powers[0]
        return sum(c * p for c, p in zip(counts, powers))

    def duration() -> float:
        nonlocal i_dur
        if i_dur >= len(dur):
            raise _StreamExhausted
        i_dur += 1
        return dur[i_dur - 1] / s_rate

    clock = 0.0
    next_arrival = inter[0] / lam
    i_arr = 1
    if trace is not None:
        trace.append(0.0, "I", 0.0, 0)

    while True:
        if heap and heap[0][0] <= next_arrival:
            t_next = heap[0][0]
            is_arrival = False
        else:
            t_next = next_arrival
            is_arrival = True
        t_stop = t_next if t_next < T else T

        # accumulate on [clock, t_stop) at constant power
        if t_stop > warm:
            P = state.power
            c = cost_cache.get(P)
            if c is None:
                c = cost_cache[P] = float(C.evaluate(P))
            t0 = clock if clock > warm else warm
            if t_stop > t0:
                if P > peak:
                    peak = P
                occupancy[P] = occupancy.get(P, 0.0) + (t_stop - t0)
                while batch < n_batches - 1 and t_stop > boundaries[batch + 1]:
                    dt = boundaries[batch + 1] - t0
                    batch_cost[batch] += c * dt
                    batch_power[batch] += P * dt
                    t0 = boundaries[batch + 1]
                    batch += 1
                dt = t_stop - t0
                batch_cost[batch] += c * dt
                batch_power[batch] += P * dt
        if t_next > T:
            break
        clock = t_next
        state.clock = clock
        counted = clock > warm

        if is_arrival:
            n_arr += 1
            post_arr += counted
            if i_arr >= len(inter):
                raise _StreamExhausted
            next_arrival = clock + inter[i_arr] / lam
            i_arr += 1
            if single:
                task_power = powers[0]
            else:
                if i_cls >= len(cls):
                    raise _StreamExhausted
                task_power = powers[cls[i_cls]]
                i_cls += 1
            task_id = n_arr
            if policy.admits(state.power, len(queue)):
                counts[index_of[task_power]] += 1
                state.power = total_power()
                heapq.heappush(heap, (clock + duration(), _COMPLETION, seq, task_id, task_power))
                seq += 1
                event = "A"
            else:
                n_post += 1
                post_post += counted
                queue[task_id] = task_power
                if d_rate > 0:
                    if i_dl >= len(dl):
                        raise _StreamExhausted
                    heapq.heappush(heap, (clock + dl[i_dl] / d_rate, _DEADLINE, seq, task_id, task_power))
                    i_dl += 1
                    seq += 1
                event = "W"
            if trace is not None:
                trace.append(clock, event, state.power, len(queue))
            continue

        _, kind, _, task_id, task_power = heapq.heappop(heap)
        if kind == _COMPLETION:
            n_done += 1
            power_before = state.power
            counts[index_of[task_power]] -= 1
            state.power = total_power()
            released = policy_on_completion(state, policy, power_before)
            for rid in released:
                rp = queue.pop(rid)
                counts[index_of[rp]] += 1
                heapq.heappush(heap, (clock + duration(), _COMPLETION, seq, rid, rp))
                seq += 1
            if released:
                n_release += len(released)
                state.power = total_power()
            event = "R" if released else "C"
        else:
            if task_id not in queue:
                continue  # released earlier; stale timer
            queue.pop(task_id)
            n_deadline += 1
            post_deadline += counted
            counts[index_of[task_power]] += 1
            state.power = total_power()
            heapq.heappush(heap, (clock + duration(), _COMPLETION, seq, task_id, task_power))
            seq += 1
            event = "X"
        if trace is not None:
            trace.append(clock, event, state.power, len(queue))

    return _RepStats(
        batch_cost=np.array(batch_cost),
        batch_power=np.array(batch_power),
        peak=peak,
        occupancy=occupancy,
        counters=_counter_dict(n_arr, n_done, n_post, n_deadline, n_release, sum(counts), len(queue)),
        post_arrivals=post_arr,
        post_postponed=post_post,
        post_deadline=post_deadline,
    )


def _counter_dict(*values) -> dict:
    keys = ("arrivals", "completions", "postponed", "deadline_activations",
            "threshold_releases", "in_service", "queued")
    return {k: int(v) for k, v in zip(keys, values)}


def _boundaries(config: SimConfig) -> np.ndarray:
    T = float(config.horizon)
    b = np.linspace(config.warmup_fraction * T, T, config.batches + 1)
    b[-1] = T
    return b


def _kernel_args(config: SimConfig):
    """Flatten policy and cost into arrays for the compiled loop, or None if unsupported.

    Exact type checks: a subclass may override behavior the kernel hardcodes.
    """
    from . import _kernel as K

    policy, C = config.policy, config.cost
    curve_q = np.zeros(0, dtype=np.int64)
    curve_v = np.zeros(0)
    release_one = False
    if type(policy) is DefaultPolicy:
        kind, thr = K.POLICY_DEFAULT, 0.0
    elif type(policy) is CRPolicy:
        kind, thr, release_one = K.POLICY_CR, policy.threshold, policy.release_one
    elif type(policy) is TPPolicy:
        kind, thr = K.POLICY_TP, policy.base
        curve_q = np.array([q for q, _ in policy.steps], dtype=np.int64)
        curve_v = np.array([v for _, v in policy.steps], dtype=float)
    elif type(policy) is ETPPolicy:
        kind, thr = K.POLICY_ETP, policy.threshold
    else:
        return None
    if type(C) is QuadraticCost:
        cost = (K.COST_QUADRATIC, np.array([C.c2, C.c1, C.c0]), np.zeros(0), np.zeros(0))
    elif type(C) is PiecewiseLinearCost:
        cost = (K.COST_PIECEWISE, np.zeros(3), np.array([k for k, _ in C.segments]),
                np.array([b for _, b in C.segments]))
    else:
        return None
    return (kind, float(thr), bool(release_one), curve_q, curve_v) + cost


def _replicate_numba(config: SimConfig, draws: _Draws, trace: Optional[Trace], args) -> _RepStats:
    from . import _kernel as K

    p = config.params
    T = float(config.horizon)
    out = K.simulate(
        T, config.warmup_fraction * T, _boundaries(config), p.lam, p.s, p.d,
        np.array([pw for pw, _ in p.power_dist]), draws.inter, draws.dur, draws.dl, draws.cls,
        *args, trace is not None,
    )
    status, batch_cost, batch_power, peak, occ, occ_arr, c, tr_t, tr_e, tr_p, tr_q, tn = out
    if status != 0:
        raise _StreamExhausted
    if len(p.power_dist) == 1:
        p0 = p.power_dist[0][0]
        occupancy = {k * p0: t for k, t in enumerate(occ_arr.tolist()) if t > 0}
    else:
        occupancy = dict(occ)
    if trace is not None:
        trace.times.extend(tr_t[:tn].tolist())
        trace.events.extend(_EVENT_CODES[e] for e in tr_e[:tn].tolist())
        trace.powers.extend(tr_p[:tn].tolist())
        trace.queues.extend(tr_q[:tn].tolist())
    return _RepStats(
        batch_cost=batch_cost,
        batch_power=batch_power,
        peak=float(peak),
        occupancy=occupancy,
        counters=_counter_dict(*c[:7]),
        post_arrivals=int(c[7]),
        post_postponed=int(c[8]),
        post_deadline=int(c[9]),
    )


ENGINES = ("auto", "numba", "python")


def _replicate(config: SimConfig, replication: int, trace: Optional[Trace], engine: str) -> _RepStats:
    args = None
    if engine in ("auto", "numba"):
        args = _kernel_args(config)
        if args is None and engine == "numba":
            raise ValueError("compiled engine supports only the built-in policies and cost functions")
    n = _initial_draws(config)
    while True:
        draws = _Draws.make(config, replication, n)
        attempt = None if trace is None else Trace()
        try:
            if args is not None:
                stats_ = _replicate_numba(config, draws, attempt, args)
            else:
                stats_ = _replicate_python(config, draws, attempt)
        except _StreamExhausted:
            n *= 2
            continue
        if trace is not None:
            trace.times, trace.events = attempt.times, attempt.events
            trace.powers, trace.queues = attempt.powers, attempt.queues
            trace.end_time = float(config.horizon)
        return stats_


def batch_means_ci(samples: Sequence[float], confidence: float = 0.95) -> tuple[float, float]:
    """Mean and Student-t half-width of a set of batch means."""
    x = np.asarray(samples, dtype=float)
    mean = float(x.mean())
    if len(x) < 2:
        return mean, math.nan
    t_crit = float(stats.t.ppf(0.5 + confidence / 2, df=len(x) - 1))
    return mean, t_crit * float(x.std(ddof=1)) / math.sqrt(len(x))


def run(config: SimConfig, trace: Optional[Trace] = None, engine: str = "auto") -> SimResult:
    """Simulate all replications and aggregate their batch means.

    ``trace``, when given, receives the event log of the first replication.
    ``engine`` picks the compiled loop (``numba``), the reference loop
    (``python``) or the compiled one when the policy and cost allow (``auto``);
    all produce identical results.
    """
    if engine not in ENGINES:
        raise ValueError(f"engine must be one of {ENGINES}, got {engine!r}")
    reps = [
        _replicate(config, r, trace if r == 0 else None, engine) for r in range(config.replications)
    ]
    T = float(config.horizon)
    warm = config.warmup_fraction * T
    b_len = (T - warm) / config.batches
    cost_batches = np.concatenate([r.batch_cost for r in reps]) / b_len
    power_batches = np.concatenate([r.batch_power for r in reps]) / b_len
    avg_cost, ci = batch_means_ci(cost_batches)
    avg_power, power_ci = batch_means_ci(power_batches)

    occ: dict = {}
    for r in reps:
        for p, t in r.occupancy.items():
            occ[p] = occ.get(p, 0.0) + t
    total_time = math.fsum(occ.values())
    occupancy = tuple((p, occ[p] / total_time) for p in sorted(occ)) if total_time > 0 else ()

    counters = {k: sum(r.counters[k] for r in reps) for k in reps[0].counters}
    arrivals = sum(r.post_arrivals for r in reps)
    return SimResult(
        avg_cost=avg_cost,
        avg_power=avg_power,
        ci_halfwidth=ci,
        power_ci_halfwidth=power_ci,
        peak_power=max(r.peak for r in reps),
        postponed_fraction=sum(r.post_postponed for r in reps) / arrivals if arrivals else 0.0,
        deadline_activation_rate=sum(r.post_deadline for r in reps) / ((T - warm) * len(reps)),
        occupancy=occupancy,
        counters=counters,
        replication_costs=tuple(float(r.batch_cost.sum() / (T - warm)) for r in reps),
    )


def tune_threshold(
    config: SimConfig, policy_name: str, thresholds: Iterable[float]
) -> tuple[float, list[tuple[float, SimResult]]]:
    """Simulate each threshold with common seeds and return the cheapest one with the sweep."""
    sweep = []
    for thr in thresholds:
        cfg = dataclasses.replace(config, policy=make_policy(policy_name, thr))
        sweep.append((float(thr), run(cfg)))
    if not sweep:
        raise ValueError("empty threshold grid")
    best = min(sweep, key=lambda item: item[1].avg_cost)
    return best[0], sweep


# ---------------------------------------------------------------------------
# Transition-rate audit


def theoretical_rates(
    policy: PolicySpec, params: StochasticParams, power: float, queued: int
) -> dict[str, float]:
    """Transition rates out of ``(P, Q)`` for unit-power demands, keyed by event code."""
    lam, s, d = params.lam, params.s, params.d
    u = 1.0 if policy.admits(power, queued) else 0.0
    rates = {"A": lam * u, "W": lam * (1.0 - u), "X": queued * d}
    if queued > 0:
        release = 1.0 if policy.release(power, power - 1.0, OrderedDict({-1: 1.0})) else 0.0
    else:
        release = 0.0
    if power > 0:
        rates["C"] = power * s * (1.0 - release)
        rates["R"] = power * s * release
    else:
        rates["C"] = rates["R"] = 0.0
    return rates


@dataclass(frozen=True)
class AuditRow:
    power: float
    queued: int
    event: str
    count: int
    time_in_state: float
    empirical: float
    expected: float
    stderr: float
    ok: bool


@dataclass(frozen=True)
class AuditReport:
    rows: tuple[AuditRow, ...]
    excluded_states: tuple[tuple[float, int], ...]

    @property
    def pass_fraction(self) -> float:
        if not self.rows:
            return 1.0
        return sum(r.ok for r in self.rows) / len(self.rows)


def ctmc_rate_audit(
    trace: Trace,
    policy: PolicySpec,
    params: StochasticParams,
    min_visits: int = 500,
    z: float = 3.0,
) -> AuditReport:
    """Compare empirical exit rates per visited ``(P, Q)`` state with the model's rates.

    Only unit-power traces are meaningful here. A pair fails when its empirical
    rate is more than ``z`` standard errors (Poisson counts, null rate) off.
    """
    n = len(trace)
    if n == 0:
        return AuditReport((), ())
    times = list(trace.times) + [trace.end_time]
    visits: dict = {}
    holding: dict = {}
    counts: dict = {}
    for i in range(n):
        key = (trace.powers[i], trace.queues[i])
        dt = times[i + 1] - times[i]
        holding[key] = holding.get(key, 0.0) + dt
        visits[key] = visits.get(key, 0) + 1
        if i + 1 < n:
            ev = trace.events[i + 1]
            counts[(key, ev)] = counts.get((key, ev), 0) + 1

    rows = []
    excluded = []
    for key in sorted(holding):
        if visits.get(key, 0) < min_visits or holding[key] <= 0:
            excluded.append(key)
            continue
        power, queued = key
        tau = holding[key]
        for ev, rate in sorted(theoretical_rates(policy, params, power, queued).items()):
            k = counts.get((key, ev), 0)
            if rate == 0.0 and k == 0:
                continue
            emp = k / tau
            se = math.sqrt(rate / tau) if rate > 0 else 0.0
            ok = abs(emp - rate) <= z * se if rate > 0 else False
            rows.append(AuditRow(power, queued, ev, k, tau, emp, rate, se, ok))
    return AuditReport(tuple(rows), tuple(excluded))
