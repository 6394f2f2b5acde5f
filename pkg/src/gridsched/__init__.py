"""Scheduling deferrable power demand to keep a convex grid cost low.

Offline: water-filling load balancing for preemptive tasks and an exact
bin-packing solver for the non-preemptive uniform case. Online: analytic
queueing costs and a discrete-event simulator for threshold admission
policies.
"""

from .task_model import (
    CostFunction,
    DemandTask,
    InfeasibleScheduleError,
    LoadProfile,
    NonpreemptiveSchedule,
    PiecewiseLinearCost,
    PreemptiveSchedule,
    QuadraticCost,
    eval_cost,
    schedule_cost,
    total_load,
)

__all__ = [
    "CostFunction",
    "DemandTask",
    "InfeasibleScheduleError",
    "LoadProfile",
    "NonpreemptiveSchedule",
    "PiecewiseLinearCost",
    "PreemptiveSchedule",
    "QuadraticCost",
    "eval_cost",
    "schedule_cost",
    "total_load",
]
__version__ = "0.1.0"
