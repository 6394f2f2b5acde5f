import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from oracles import brute_force_min_bins, brute_force_starts

from gridsched.offline_nonpreemptive import (
    BUDGET_ENV,
    BudgetExceeded,
    PackingInstance,
    decide_packing,
    exact_min_bins,
    exact_nonpreemptive_min_cost,
    first_fit_decreasing,
    quantize_powers,
    schedule_from_packing,
)
from gridsched.offline_preemptive import solve
from gridsched.task_model import (
    DemandTask,
    PreemptiveSchedule,
    QuadraticCost,
    random_tasks,
    schedule_cost,
    total_load,
)

SQ = QuadraticCost(1.0)
SMALL = PackingInstance((3, 3, 2, 2), 5.0)
GAP = PackingInstance((4, 3, 3, 2, 2, 2), 8.0)

sizes_strategy = st.lists(st.integers(1, 10), max_size=10)


def _check_partition(inst, result):
    items = sorted(i for b in result.bins for i in b)
    assert items == list(range(len(inst.item_sizes)))
    for b in result.bins:
        assert sum(inst.item_sizes[i] for i in b) <= inst.capacity * (1 + 1e-9)


class TestDecidePacking:
    def test_fits_two(self):
        assert decide_packing(SMALL, 2)

    def test_not_one(self):
        assert not decide_packing(SMALL, 1)

    def test_empty(self):
        assert decide_packing(PackingInstance((), 3.0), 1)

    def test_oversized_item_is_false(self, caplog):
        assert not decide_packing(PackingInstance((2, 6), 5.0), 3)
        assert "exceed" in caplog.text

    def test_bad_m(self):
        with pytest.raises(ValueError):
            decide_packing(SMALL, 0)


class TestExactMinBins:
    def test_small(self):
        assert exact_min_bins(SMALL).bin_count == 2

    def test_beats_ffd(self):
        res = exact_min_bins(GAP)
        assert res.bin_count == 2
        _check_partition(GAP, res)
        assert sorted(sorted(GAP.item_sizes[i] for i in b) for b in res.bins) == [[2, 2, 4], [2, 3, 3]]

    def test_full_items(self):
        assert exact_min_bins(PackingInstance((7.0, 7.0, 7.0), 7.0)).bin_count == 3

    def test_oversized_rejected(self):
        with pytest.raises(ValueError):
            exact_min_bins(PackingInstance((9,), 8.0))

    def test_budget_carries_ffd(self):
        with pytest.raises(BudgetExceeded) as err:
            exact_min_bins(GAP, budget=3)
        assert err.value.best.bin_count == 3

    def test_budget_from_environment(self, monkeypatch):
        monkeypatch.setenv(BUDGET_ENV, "2")
        with pytest.raises(BudgetExceeded):
            exact_min_bins(GAP)
        monkeypatch.setenv(BUDGET_ENV, "zero")
        with pytest.raises(ValueError):
            exact_min_bins(GAP)

    @given(sizes_strategy, st.integers(10, 20))
    def test_matches_brute_force(self, sizes, cap):
        inst = PackingInstance(tuple(sizes), float(cap))
        res = exact_min_bins(inst)
        _check_partition(inst, res)
        assert res.bin_count == brute_force_min_bins(sizes, cap)


class TestFirstFitDecreasing:
    def test_known_gap(self):
        res = first_fit_decreasing(GAP)
        assert [[GAP.item_sizes[i] for i in b] for b in res.bins] == [[4, 3], [3, 2, 2], [2]]

    def test_small(self):
        assert first_fit_decreasing(SMALL).bin_count == 2

    def test_empty(self):
        assert first_fit_decreasing(PackingInstance((), 1.0)).bin_count == 0

    @given(st.lists(st.floats(0.01, 1.0), max_size=10))
    def test_within_classical_bound(self, sizes):
        inst = PackingInstance(tuple(sizes), 1.0)
        ffd = first_fit_decreasing(inst).bin_count
        opt = exact_min_bins(inst).bin_count
        assert opt <= ffd <= 11 / 9 * opt + 1


class TestScheduleFromPacking:
    def test_one_bin(self):
        inst = PackingInstance((3, 2), 5.0)
        sched, load = schedule_from_packing(inst, exact_min_bins(inst))
        assert sched.starts == {0: 0.0, 1: 3.0}
        assert load.values.tolist() == [1.0]

    def test_peak_is_bins_times_step(self):
        inst = PackingInstance((3, 3, 2, 2), 5.0, power_step=2.0)
        res = exact_min_bins(inst)
        _, load = schedule_from_packing(inst, res)
        assert res.peak_power == 4.0 and load.max() == 4.0

    def test_empty(self):
        inst = PackingInstance((), 5.0)
        sched, load = schedule_from_packing(inst, first_fit_decreasing(inst))
        assert sched.starts == {} and load.values.tolist() == [0.0]

    @given(sizes_strategy.filter(bool), st.integers(10, 20))
    def test_meets_deadline_and_peak(self, sizes, cap):
        inst = PackingInstance(tuple(sizes), float(cap))
        res = first_fit_decreasing(inst)
        sched, load = schedule_from_packing(inst, res)
        assert load.max() == res.bin_count
        for i, t0 in sched.starts.items():
            assert t0 + inst.item_sizes[i] <= cap


class TestQuantizePowers:
    def test_three_units(self):
        out = quantize_powers([DemandTask(5, 1.0, 2.0, 3.0, 4.0)], 1.0)
        assert [(t.power, t.arrival, t.duration, t.deadline) for t in out] == [(1.0, 1.0, 2.0, 4.0)] * 3

    def test_half_quantum(self):
        assert len(quantize_powers([DemandTask(0, 0.0, 1.0, 2.5, 1.0)], 0.5)) == 5

    def test_identity(self):
        tasks = random_tasks(4, 5.0, 1, powers=(1.5,))
        out = quantize_powers(tasks, 1.5)
        assert [(t.arrival, t.duration, t.power) for t in out] == [(t.arrival, t.duration, t.power) for t in tasks]

    def test_non_multiple_names_task(self):
        with pytest.raises(ValueError, match="task 4"):
            quantize_powers([DemandTask(4, 0.0, 1.0, 1.3, 1.0)], 0.5)

    @given(st.integers(1, 6), st.integers(0, 10**6))
    def test_pointwise_load_preserved(self, n, seed):
        tasks = random_tasks(n, 5.0, seed)
        res = solve(tasks, SQ, 5.0)
        expanded = quantize_powers(tasks, 0.5)
        alloc = {}
        k = 0
        for t in tasks:
            for _ in range(round(t.power / 0.5)):
                alloc[expanded[k].id] = res.schedule.allocations[t.id]
                k += 1
        original = total_load(tasks, res.schedule, 5.0)
        split = total_load(expanded, PreemptiveSchedule(alloc), 5.0)
        pts = np.linspace(0, 5.0, 201)[:-1]
        np.testing.assert_allclose(split.sample(pts), original.sample(pts), atol=1e-9)


class TestExactNonpreemptive:
    def test_single_task_ties_to_arrival(self):
        res = exact_nonpreemptive_min_cost([DemandTask(0, 1.0, 1.0, 1.0, 4.0)], SQ, 4.0, 0.5)
        assert res.schedule.starts == {0: 1.0}
        assert res.objective == 1.0

    def test_two_units_go_disjoint(self):
        tasks = [DemandTask(i, 0.0, 1.0, 1.0, 2.0) for i in range(2)]
        res = exact_nonpreemptive_min_cost(tasks, SQ, 2.0, 1.0)
        assert sorted(res.schedule.starts.values()) == [0.0, 1.0]
        assert res.objective == 2.0
        # lexicographic tie-break picks task 0 first
        assert res.schedule.starts == {0: 0.0, 1: 1.0}

    def test_uniform_instance_matches_packing(self):
        tasks = GAP.tasks()
        res = exact_nonpreemptive_min_cost(tasks, SQ, 8.0, 1.0)
        _, load = schedule_from_packing(GAP, exact_min_bins(GAP))
        assert res.objective == pytest.approx(schedule_cost(SQ, load))

    def test_budget_exceeded_carries_best(self):
        tasks = random_tasks(6, 8.0, 3)
        with pytest.raises(BudgetExceeded) as err:
            exact_nonpreemptive_min_cost(tasks, SQ, 8.0, 0.25, budget=50)
        best = err.value.best
        if best is not None:
            assert best.objective >= exact_nonpreemptive_min_cost(tasks, SQ, 8.0, 0.25).objective

    def test_bad_grid(self):
        with pytest.raises(ValueError):
            exact_nonpreemptive_min_cost([], SQ, 1.0, 0.0)

    @given(st.integers(1, 4), st.integers(0, 10**6))
    def test_matches_full_enumeration_and_bounds_relaxation(self, n, seed):
        tasks = random_tasks(n, 3.0, seed, resolution=0.5)
        res = exact_nonpreemptive_min_cost(tasks, SQ, 3.0, 0.5)
        assert res.objective == pytest.approx(brute_force_starts(tasks, SQ, 3.0, 0.5), rel=1e-12)
        assert res.objective >= solve(tasks, SQ, 3.0).objective * (1 - 1e-9)
        assert math.isclose(res.objective, schedule_cost(SQ, total_load(tasks, res.schedule, 3.0)))
