import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from oracles import compound_double_sum, mmc_balance

from gridsched.stochastic_analysis import (
    StochasticParams,
    UnstableSystemError,
    compound_default_cost,
    compound_power_distribution,
    cr_asymptotics,
    default_policy_cost,
    mm_inf_pmf,
    mmc_power_cost,
    mmc_stationary,
    poisson_distribution,
    universal_lower_bound,
    weighted_mixture_cost_diagnostic,
)
from gridsched.task_model import PiecewiseLinearCost, QuadraticCost

SQ = QuadraticCost(1.0)
LINEAR = PiecewiseLinearCost(((1.0, 0.0),))
CONST = QuadraticCost(0.0, 0.0, 3.5)


class TestParams:
    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(lam=0.0, s=1.0),
            dict(lam=1.0, s=-1.0),
            dict(lam=1.0, s=1.0, d=-0.1),
            dict(lam=1.0, s=1.0, power_dist=((1.0, 0.5), (2.0, 0.4))),
            dict(lam=1.0, s=1.0, power_dist=((1.0, 0.5), (1.0, 0.5))),
            dict(lam=1.0, s=1.0, power_dist=()),
        ],
    )
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            StochasticParams(**kwargs)

    def test_mean_power(self):
        p = StochasticParams(2.0, 1.0, power_dist=((1.0, 0.5), (3.0, 0.5)))
        assert p.mean_power == 2.0 and p.mean_total_power == 4.0 and not p.unit_power


class TestMMInf:
    def test_empty_state(self):
        assert mm_inf_pmf(StochasticParams(2.0, 1.0), 0) == pytest.approx(0.1353353, abs=1e-7)

    def test_mean_one(self):
        assert mm_inf_pmf(StochasticParams(2.0, 2.0), 1) == pytest.approx(0.3678794, abs=1e-7)

    def test_large_index_no_overflow(self):
        assert mm_inf_pmf(StochasticParams(50.0, 1.0), 2000) == 0.0
        assert mm_inf_pmf(StochasticParams(500.0, 1.0), 500) == pytest.approx(0.017839, rel=1e-4)

    @given(st.floats(0.01, 200))
    def test_normalized(self, mean):
        dist = poisson_distribution(mean)
        assert abs(dist.probabilities.sum() - 1.0) <= 1e-12
        assert dist.truncation_error < 1e-12


class TestDefaultCost:
    def test_quadratic(self):
        assert default_policy_cost(StochasticParams(4.0, 1.0), SQ) == pytest.approx(20.0, rel=1e-9)

    def test_linear(self):
        assert default_policy_cost(StochasticParams(4.0, 1.0), LINEAR) == pytest.approx(4.0, rel=1e-9)

    def test_constant(self):
        assert default_policy_cost(StochasticParams(123.0, 0.7), CONST) == pytest.approx(3.5, rel=1e-12)

    def test_rejects_variable_power(self):
        with pytest.raises(ValueError, match="compound"):
            default_policy_cost(StochasticParams(1.0, 1.0, power_dist=((2.0, 1.0),)), SQ)

    @given(st.floats(0.05, 100), st.floats(0.1, 10))
    def test_second_moment(self, lam, s):
        a = lam / s
        assert default_policy_cost(StochasticParams(lam, s), SQ) == pytest.approx(a + a * a, rel=1e-9)


class TestCompound:
    def test_single_unit_class_reduces(self):
        p = StochasticParams(4.0, 1.0)
        assert float(compound_default_cost(p, SQ)) == default_policy_cost(p, SQ)

    def test_single_class_of_two(self):
        p = StochasticParams(1.0, 1.0, power_dist=((2.0, 1.0),))
        assert float(compound_default_cost(p, LINEAR)) == pytest.approx(2.0, rel=1e-12)

    def test_two_classes_linear(self):
        p = StochasticParams(2.0, 1.0, power_dist=((1.0, 0.5), (3.0, 0.5)))
        assert float(compound_default_cost(p, LINEAR)) == pytest.approx(4.0, rel=1e-12)

    @pytest.mark.parametrize("classes", [((1.0, 0.3), (2.5, 0.7)), ((0.4, 0.5), (1.0, 0.5))])
    def test_matches_double_sum(self, classes):
        p = StochasticParams(3.0, 1.5, power_dist=classes)
        C = PiecewiseLinearCost(((1.0, 0.0), (3.0, -4.0)))
        assert float(compound_default_cost(p, C)) == pytest.approx(
            compound_double_sum(3.0, 1.5, classes, C), rel=1e-10
        )

    def test_incommensurable_falls_back_to_sampling(self):
        p = StochasticParams(2.0, 1.0, power_dist=((1.0, 0.5), (math.pi, 0.5)))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            est = compound_default_cost(p, LINEAR, seed=3)
        assert caught and not est.exact and est.stderr > 0
        assert abs(est.value - p.mean_total_power) < 5 * est.stderr
        assert compound_power_distribution(p) is None

    @given(st.floats(0.1, 20), st.floats(0.2, 5), st.integers(1, 4), st.integers(1, 4), st.floats(0.05, 0.95))
    def test_identity_cost_is_mean(self, lam, s, u1, u2, w):
        if u1 == u2:
            u2 += 1
        p = StochasticParams(lam, s, power_dist=((0.5 * u1, w), (0.5 * u2, 1 - w)))
        assert float(compound_default_cost(p, LINEAR)) == pytest.approx(p.mean_total_power, rel=1e-9)

    def test_diagnostic_differs_from_model(self):
        p = StochasticParams(2.0, 1.0, power_dist=((1.0, 0.5), (3.0, 0.5)))
        assert weighted_mixture_cost_diagnostic(p, SQ) != pytest.approx(float(compound_default_cost(p, SQ)))


class TestLowerBound:
    def test_three(self):
        assert universal_lower_bound(StochasticParams(3.0, 1.0), SQ) == 9.0

    def test_eight(self):
        assert universal_lower_bound(StochasticParams(8.0, 1.0), SQ) == 64.0

    def test_constant(self):
        assert universal_lower_bound(StochasticParams(8.0, 1.0), CONST) == 3.5


class TestMMC:
    def test_mm1_geometric(self):
        dist = mmc_stationary(0.5, 1.0, 1)
        assert dist.probabilities[0] == pytest.approx(0.5, rel=1e-12)
        np.testing.assert_allclose(dist.probabilities[:20], 0.5 * 0.5 ** np.arange(20), rtol=1e-12)

    @pytest.mark.parametrize("lam,s,c", [(8.0, 1.0, 9), (3.0, 2.0, 2), (20.0, 1.0, 25)])
    def test_matches_balance_equations(self, lam, s, c):
        dist = mmc_stationary(lam, s, c)
        ref = mmc_balance(lam, s, c)
        k = min(len(ref), len(dist.probabilities))
        np.testing.assert_allclose(dist.probabilities[:k], ref[:k], atol=1e-12)
        assert abs(dist.probabilities.sum() - 1.0) <= 1e-12

    def test_poisson_limit(self):
        dist = mmc_stationary(8.0, 1.0, 48)
        ref = poisson_distribution(8.0)
        k = max(len(dist.probabilities), len(ref.probabilities))
        a = np.pad(dist.probabilities, (0, k - len(dist.probabilities)))
        b = np.pad(ref.probabilities, (0, k - len(ref.probabilities)))
        assert 0.5 * np.abs(a - b).sum() < 1e-6

    def test_unstable(self):
        with pytest.raises(UnstableSystemError):
            mmc_stationary(8.0, 1.0, 8)

    def test_power_cost_mm1_linear(self):
        assert mmc_power_cost(0.5, 1.0, 1, LINEAR) == pytest.approx(0.5, rel=1e-12)

    def test_power_cost_constant(self):
        assert mmc_power_cost(8.0, 1.0, 9, CONST) == pytest.approx(3.5, rel=1e-12)

    @given(st.floats(0.1, 30), st.floats(0.2, 5), st.integers(1, 10))
    def test_busy_servers_little(self, lam, s, extra):
        c = math.floor(lam / s) + extra
        if lam / (c * s) >= 0.999:
            c += 1
        assert mmc_power_cost(lam, s, c, LINEAR) == pytest.approx(lam / s, rel=1e-9)

    @given(st.floats(0.5, 20), st.integers(1, 20), st.sampled_from([SQ, PiecewiseLinearCost(((1, 0), (4, -10)))]))
    def test_sits_between_bound_and_default(self, lam, extra, C):
        c = math.ceil(lam) + extra
        p = StochasticParams(lam, 1.0)
        cost = mmc_power_cost(lam, 1.0, c, C)
        assert universal_lower_bound(p, C) <= cost + 1e-9
        assert cost <= default_policy_cost(p, C) + 1e-9


class TestCRAsymptotics:
    def test_table(self):
        rows = cr_asymptotics(StochasticParams(8.0, 1.0), [1.0, 40.0], SQ)
        assert [r.servers for r in rows] == [9, 48]
        assert rows[0].gap == pytest.approx(mmc_power_cost(8.0, 1.0, 9, SQ) - 64.0)
        assert rows[0].gap > 0
        assert rows[1].gap == pytest.approx(8.0, rel=0.01)
        assert all(r.lower_bound == 64.0 and r.stable for r in rows)

    def test_rounds_up(self):
        [row] = cr_asymptotics(StochasticParams(7.5, 1.0), [0.2], SQ)
        assert row.servers == 8 and row.threshold == pytest.approx(7.7)

    def test_unstable_flagged(self):
        # an epsilon below the rounding guard leaves c = lam/s, so rho = 1
        [row] = cr_asymptotics(StochasticParams(8.0, 1.0), [1e-13], SQ)
        assert row.servers == 8 and not row.stable and math.isnan(row.mmc_cost)

    def test_rejects_nonpositive_eps(self):
        with pytest.raises(ValueError):
            cr_asymptotics(StochasticParams(8.0, 1.0), [0.0], SQ)

    def test_rejects_variable_power(self):
        with pytest.raises(ValueError):
            cr_asymptotics(StochasticParams(8.0, 1.0, power_dist=((2.0, 1.0),)), [1.0], SQ)
