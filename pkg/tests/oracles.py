"""Independent reference solvers used only by the tests."""

from __future__ import annotations

import itertools
import math

import cvxpy as cp
import numpy as np

from gridsched.task_model import PiecewiseLinearCost, QuadraticCost


def fine_grid_preemptive(tasks, C, horizon, dt=0.01):
    """Optimal relaxed schedule cost on a uniform time grid, via a convex program.

    Returns ``(objective, max_load)``.
    """
    K = int(round(horizon / dt))
    centers = (np.arange(K) + 0.5) * dt
    load = 0
    constraints = []
    for task in tasks:
        mask = (centers > task.arrival) & (centers < task.deadline)
        x = cp.Variable(K)
        constraints += [x >= 0, x <= mask.astype(float), cp.sum(x) * dt == task.duration]
        load = load + task.power * x
    if not tasks:
        return float(np.sum(C.evaluate(np.zeros(K))) * dt), 0.0
    if isinstance(C, QuadraticCost):
        obj = dt * (C.c2 * cp.sum_squares(load) + C.c1 * cp.sum(load) + C.c0 * K)
    elif isinstance(C, PiecewiseLinearCost):
        pieces = [k * load + b for k, b in C.segments]
        expr = pieces[0] if len(pieces) == 1 else cp.maximum(*pieces)
        obj = dt * cp.sum(expr)
    else:
        raise TypeError(type(C))
    prob = cp.Problem(cp.Minimize(obj), constraints)
    prob.solve(solver=cp.CLARABEL)
    return float(prob.value), float(np.max(load.value))


def set_partitions(n):
    """All partitions of ``range(n)`` as restricted-growth label lists."""
    if n == 0:
        yield []
        return
    labels = [0] * n

    def rec(i, blocks):
        if i == n:
            yield list(labels)
            return
        for b in range(blocks + 1):
            labels[i] = b
            yield from rec(i + 1, max(blocks, b + 1))

    yield from rec(1, 1)


def brute_force_min_bins(sizes, capacity, tol=1e-9):
    """Fewest blocks over every partition whose blocks fit the capacity."""
    n = len(sizes)
    if n == 0:
        return 0
    best = n
    labels = [0] * n
    fill = [0.0] * n
    limit = capacity * (1 + tol)
    # plain restricted-growth enumeration; only capacity-violating branches are cut
    def rec(i, blocks):
        nonlocal best
        if blocks >= best:
            return
        if i == n:
            best = blocks
            return
        for b in range(blocks + 1):
            if fill[b] + sizes[i] > limit:
                continue
            fill[b] += sizes[i]
            labels[i] = b
            rec(i + 1, max(blocks, b + 1))
            fill[b] -= sizes[i]

    fill[0] = sizes[0]
    rec(1, 1)
    return best


def brute_force_starts(tasks, C, horizon, step):
    """Minimum cost over the full product of grid start times, no pruning."""
    from gridsched.task_model import NonpreemptiveSchedule, schedule_cost, total_load

    grids = [
        [t.arrival + k * step for k in range(int(math.floor(t.slack / step + 1e-9)) + 1)]
        for t in tasks
    ]
    best = math.inf
    for combo in itertools.product(*grids):
        sched = NonpreemptiveSchedule({t.id: s for t, s in zip(tasks, combo)})
        best = min(best, schedule_cost(C, total_load(tasks, sched, horizon)))
    return best


def mmc_balance(lam, s, c, n_max=400):
    """M/M/c stationary law by solving the truncated generator directly."""
    Q = np.zeros((n_max + 1, n_max + 1))
    for n in range(n_max + 1):
        if n < n_max:
            Q[n, n + 1] = lam
        if n > 0:
            Q[n, n - 1] = min(n, c) * s
        Q[n, n] = -Q[n].sum()
    A = np.vstack([Q.T, np.ones(n_max + 1)])
    b = np.zeros(n_max + 2)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    return pi


def compound_double_sum(lam, s, classes, C, n_max=80):
    """E[C(sum_k p_k N_k)] for two classes by direct double summation."""
    from scipy.stats import poisson

    (p1, w1), (p2, w2) = classes
    n = np.arange(n_max)
    q1 = poisson.pmf(n, lam * w1 / s)
    q2 = poisson.pmf(n, lam * w2 / s)
    grid = p1 * n[:, None] + p2 * n[None, :]
    return float(np.sum(q1[:, None] * q2[None, :] * C.evaluate(grid)))
