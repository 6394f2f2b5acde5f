import sys
from pathlib import Path

import numpy as np
from hypothesis import settings, strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from gridsched.task_model import LoadProfile, PiecewiseLinearCost, QuadraticCost  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"


@st.composite
def piecewise_costs(draw):
    slopes = sorted(draw(st.lists(st.floats(0, 10), min_size=1, max_size=4)))
    intercepts = draw(st.lists(st.floats(-10, 10), min_size=len(slopes), max_size=len(slopes)))
    return PiecewiseLinearCost(tuple(zip(slopes, intercepts)))


quadratic_costs = st.builds(QuadraticCost, st.floats(0, 5), st.floats(0, 5), st.floats(-5, 5))
costs = st.one_of(piecewise_costs(), quadratic_costs)


@st.composite
def profiles(draw, horizon=None):
    T = horizon if horizon is not None else draw(st.floats(0.5, 20))
    n = draw(st.integers(1, 8))
    cuts = sorted(set(draw(st.lists(st.floats(0.01, 0.99), min_size=n - 1, max_size=n - 1))))
    bp = np.array([0.0] + [c * T for c in cuts] + [T])
    vals = draw(st.lists(st.floats(0, 10), min_size=len(bp) - 1, max_size=len(bp) - 1))
    return LoadProfile(bp, np.array(vals))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
