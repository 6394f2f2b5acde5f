"""Command-line entry point: ``gridsched <verb> --scenario FILE [--out FILE]``.

Verbs: ``offline-preemptive``, ``offline-nonpreemptive``, ``analyze``,
``simulate``, ``compare``. Table outputs are CSV (JSON when ``--out`` ends in
``.json``); offline results are JSON. Numbers are written with 9 significant
digits.

Exit codes: 0 success, 1 input error, 2 no convergence, 3 search budget exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import offline_nonpreemptive as onp
from . import offline_preemptive as op
from . import sim_engine as se
from . import stochastic_analysis as sa
from .task_model import (
    CostFunction,
    DemandTask,
    cost_from_dict,
    schedule_cost,
    tasks_from_json,
)

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_BUDGET = 0, 1, 2, 3

SIMULATE_COLUMNS = (
    "policy", "threshold", "d", "avg_cost", "ci", "avg_power", "peak", "postponed_fraction",
    "deadline_activation_rate", "lower_bound", "mmc_reference",
)
COMPARE_COLUMNS = ("policy", "d", "mean_deadline", "threshold", "avg_cost", "ci", "lower_bound")
ANALYZE_COLUMNS = ("quantity", "epsilon", "servers", "rho", "value", "lower_bound", "gap", "stable")


class ScenarioError(ValueError):
    pass


@dataclass
class PolicyGrid:
    name: str
    thresholds: list  # floats, or TPPolicy curves


@dataclass
class Scenario:
    name: str
    cost: CostFunction
    offline: Optional[dict] = None
    params: Optional[sa.StochasticParams] = None
    d_values: list = field(default_factory=list)
    policies: list = field(default_factory=list)
    horizon: float = 1e4
    seed: int = 0
    replications: int = 1
    batches: int = 20
    warmup: float = 0.1
    epsilons: list = field(default_factory=list)
    solver: dict = field(default_factory=dict)


def _parse_policy(entry: dict) -> PolicyGrid:
    name = str(entry.get("name", "")).lower()
    if name not in se.POLICY_NAMES:
        raise ScenarioError(f"unknown policy {name!r}")
    if name == "default":
        return PolicyGrid(name, [math.nan])
    grid = []
    for thr in entry.get("thresholds", []):
        if name == "tp" and isinstance(thr, dict):
            grid.append(se.TPPolicy(float(thr["base"]), tuple(tuple(s) for s in thr.get("steps", []))))
        else:
            grid.append(float(thr))
    if not grid:
        raise ScenarioError(f"policy {name!r} needs a non-empty 'thresholds' list")
    return PolicyGrid(name, grid)


def load_scenario(path) -> Scenario:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ScenarioError(f"scenario file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"malformed JSON in {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ScenarioError("scenario must be a JSON object")
    has_off, has_sto = "offline" in raw, "stochastic" in raw
    if has_off == has_sto:
        raise ScenarioError("scenario needs exactly one of 'offline' or 'stochastic'")
    try:
        sc = Scenario(name=str(raw.get("name", Path(path).stem)), cost=cost_from_dict(raw["cost"]))
        if has_off:
            sc.offline = raw["offline"]
            sc.solver = raw.get("solver", {})
            return sc
        sto = raw["stochastic"]
        d = sto.get("d", [1.0])
        sc.d_values = [float(x) for x in (d if isinstance(d, list) else [d])]
        if not sc.d_values:
            raise ScenarioError("'d' list must be non-empty")
        sc.params = sa.StochasticParams(
            float(sto["lambda"]), float(sto["s"]), sc.d_values[0],
            tuple(tuple(x) for x in sto.get("power_dist", [[1.0, 1.0]])),
        )
        sc.policies = [_parse_policy(p) for p in raw.get("policies", [])]
        sim = raw.get("simulation", {})
        sc.horizon = float(sim.get("horizon", sc.horizon))
        sc.seed = int(sim.get("seed", 0))
        sc.replications = int(sim.get("replications", 1))
        sc.batches = int(sim.get("batches", 20))
        sc.warmup = float(sim.get("warmup", 0.1))
        sc.epsilons = [float(e) for e in raw.get("analysis", {}).get("epsilons", [])]
        return sc
    except KeyError as exc:
        raise ScenarioError(f"missing key {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(str(exc)) from None


# ---------------------------------------------------------------------------
# Output helpers


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, float)):
        return f"{x:.9g}"
    return str(x)


def _round(x):
    if isinstance(x, float) and math.isfinite(x):
        return float(f"{x:.9g}")
    if isinstance(x, float):
        return None
    if isinstance(x, dict):
        return {k: _round(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round(v) for v in x]
    return x


def _emit(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def write_table(columns: Sequence[str], rows: list[dict], out: Optional[str]) -> None:
    if out is not None and out.endswith(".json"):
        _emit(json.dumps([_round({c: r.get(c) for c in columns}) for r in rows], indent=2) + "\n", out)
        return
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r.get(c)) for c in columns])
    _emit(buf.getvalue(), out)


def write_json(obj: dict, out: Optional[str]) -> None:
    _emit(json.dumps(_round(obj), indent=2, sort_keys=True) + "\n", out)


# ---------------------------------------------------------------------------
# Commands


def _offline_tasks(sc: Scenario) -> tuple[list[DemandTask], float]:
    off = sc.offline
    if "tasks" not in off:
        raise ScenarioError("offline scenario needs a 'tasks' list")
    tasks = tasks_from_json(off["tasks"])
    horizon = float(off.get("horizon", max((t.deadline for t in tasks), default=1.0)))
    return tasks, horizon


def cmd_offline_preemptive(sc: Scenario, args) -> int:
    tasks, horizon = _offline_tasks(sc)
    cfg = op.BalanceConfig(
        objective_tolerance=float(sc.solver.get("objective_tolerance", 1e-8)),
        max_rounds=int(sc.solver.get("max_rounds", 1000)),
    )
    res = op.solve(tasks, sc.cost, horizon, cfg)
    write_json(
        {
            "scenario": sc.name,
            "objective": res.objective,
            "rounds": res.rounds_used,
            "converged": res.converged,
            "load": res.load.to_dict(),
            "schedule": {str(k): v.to_dict() for k, v in sorted(res.schedule.allocations.items())},
            "fractional": [
                {"id": e.task_id, "fractional_mass": e.fractional_mass} for e in op.rounding_hint(res)
            ],
        },
        args.out,
    )
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def _packing_instance(sc: Scenario) -> Optional[onp.PackingInstance]:
    off = sc.offline
    if "sizes" in off:
        return onp.PackingInstance(tuple(off["sizes"]), float(off["D"]), float(off.get("p", 1.0)))
    tasks, _ = _offline_tasks(sc)
    uniform = tasks and all(
        t.arrival == 0 and t.deadline == tasks[0].deadline and t.power == tasks[0].power for t in tasks
    )
    if not uniform:
        return None
    return onp.PackingInstance(
        tuple(t.duration for t in tasks), tasks[0].deadline, tasks[0].power
    )


def _packing_report(sc: Scenario, inst: onp.PackingInstance, result: onp.PackingResult, method: str) -> dict:
    sched, load = onp.schedule_from_packing(inst, result)
    return {
        "scenario": sc.name,
        "method": method,
        "bins": [list(b) for b in result.bins],
        "bin_count": result.bin_count,
        "peak_power": result.peak_power,
        "starts": {str(k): v for k, v in sorted(sched.starts.items())},
        "cost": schedule_cost(sc.cost, load),
        "load": load.to_dict(),
    }


def cmd_offline_nonpreemptive(sc: Scenario, args) -> int:
    if args.grid is not None:
        tasks, horizon = _offline_tasks(sc)
        try:
            res = onp.exact_nonpreemptive_min_cost(tasks, sc.cost, horizon, args.grid)
        except onp.BudgetExceeded as exc:
            best = exc.best
            write_json(
                {
                    "scenario": sc.name, "method": "grid", "budget_exceeded": True,
                    "objective": None if best is None else best.objective,
                    "starts": {} if best is None else {str(k): v for k, v in sorted(best.schedule.starts.items())},
                },
                args.out,
            )
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_BUDGET
        write_json(
            {
                "scenario": sc.name, "method": "grid", "budget_exceeded": False,
                "objective": res.objective, "nodes": res.nodes,
                "starts": {str(k): v for k, v in sorted(res.schedule.starts.items())},
            },
            args.out,
        )
        return EXIT_OK

    inst = _packing_instance(sc)
    if inst is None:
        raise ScenarioError("packing mode needs a uniform instance (sizes/D/p); use --grid otherwise")
    if args.ffd:
        return _write_packing(sc, inst, onp.first_fit_decreasing(inst), "ffd", args.out)
    try:
        result = onp.exact_min_bins(inst)
    except onp.BudgetExceeded as exc:
        report = _packing_report(sc, inst, exc.best, "exact")
        report["budget_exceeded"] = True
        write_json(report, args.out)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    return _write_packing(sc, inst, result, "exact", args.out)


def _write_packing(sc, inst, result, method, out) -> int:
    report = _packing_report(sc, inst, result, method)
    report["budget_exceeded"] = False
    write_json(report, out)
    return EXIT_OK


def _require_stochastic(sc: Scenario) -> sa.StochasticParams:
    if sc.params is None:
        raise ScenarioError("this command needs a 'stochastic' scenario")
    return sc.params


def cmd_analyze(sc: Scenario, args) -> int:
    params = _require_stochastic(sc)
    C = sc.cost
    bound = sa.universal_lower_bound(params, C)
    default = float(sa.compound_default_cost(params, C))
    rows = [
        {"quantity": "default_cost", "value": default, "lower_bound": bound, "gap": default - bound},
        {"quantity": "lower_bound", "value": bound, "lower_bound": bound, "gap": 0.0},
    ]
    servers = sorted({
        math.ceil(t) for g in sc.policies if g.name == "cr" for t in g.thresholds
    }) if params.unit_power else []
    for c in servers:
        rho = params.lam / (c * params.s)
        row = {"quantity": "mmc_cost", "servers": c, "rho": rho, "lower_bound": bound,
               "stable": rho < 1}
        if rho < 1:
            row["value"] = sa.mmc_power_cost(params.lam, params.s, c, C)
            row["gap"] = row["value"] - bound
        rows.append(row)
    for r in sa.cr_asymptotics(params, sc.epsilons, C) if params.unit_power else []:
        rows.append({
            "quantity": "cr_asymptotics", "epsilon": r.epsilon, "servers": r.servers, "rho": r.rho,
            "value": r.mmc_cost, "lower_bound": r.lower_bound, "gap": r.gap, "stable": r.stable,
        })
    write_table(ANALYZE_COLUMNS, rows, args.out)
    return EXIT_OK


def _policy_label(thr) -> float:
    return thr.base if isinstance(thr, se.TPPolicy) else thr


def _build_policy(name: str, thr) -> se.PolicySpec:
    if isinstance(thr, se.TPPolicy):
        return thr
    return se.make_policy(name, None if name == "default" else thr)


def _cells(sc: Scenario, args) -> list[tuple[str, object, float]]:
    grids = sc.policies
    if getattr(args, "policy", None):
        grids = [g for g in grids if g.name == args.policy] or [PolicyGrid(args.policy, [math.nan])]
    if getattr(args, "threshold", None) is not None:
        grids = [PolicyGrid(g.name, [math.nan] if g.name == "default" else [args.threshold]) for g in grids]
    cells = []
    for g in grids:
        for thr in g.thresholds:
            if g.name != "default" and isinstance(thr, float) and math.isnan(thr):
                raise ScenarioError(f"policy {g.name!r} needs --threshold")
            for d in sc.d_values:
                cells.append((g.name, thr, d))
    return cells


def _sort_key(cell) -> tuple:
    name, thr, d = cell[0], _policy_label(cell[1]), cell[2]
    return (name, -math.inf if math.isnan(thr) else thr, d)


def _simulate_cell(sc: Scenario, name: str, thr, d: float, seed: int) -> se.SimResult:
    params = sa.StochasticParams(sc.params.lam, sc.params.s, d, sc.params.power_dist)
    cfg = se.SimConfig(
        params, _build_policy(name, thr), sc.cost, sc.horizon, sc.warmup, seed,
        sc.batches, sc.replications,
    )
    return se.run(cfg)


def _seed(sc: Scenario, args) -> int:
    return sc.seed if getattr(args, "seed", None) is None else args.seed


def cmd_simulate(sc: Scenario, args) -> int:
    params = _require_stochastic(sc)
    bound = sa.universal_lower_bound(params, sc.cost)
    rows = []
    for name, thr, d in sorted(_cells(sc, args), key=_sort_key):
        res = _simulate_cell(sc, name, thr, d, _seed(sc, args))
        mmc = None
        label = _policy_label(thr)
        if name == "cr" and params.unit_power and label == math.ceil(label):
            if params.lam / (label * params.s) < 1:
                mmc = sa.mmc_power_cost(params.lam, params.s, int(label), sc.cost)
        rows.append({
            "policy": name, "threshold": None if math.isnan(label) else label, "d": d,
            "avg_cost": res.avg_cost, "ci": res.ci_halfwidth, "avg_power": res.avg_power,
            "peak": res.peak_power, "postponed_fraction": res.postponed_fraction,
            "deadline_activation_rate": res.deadline_activation_rate,
            "lower_bound": bound, "mmc_reference": mmc,
        })
    write_table(SIMULATE_COLUMNS, rows, args.out)
    return EXIT_OK


def cmd_compare(sc: Scenario, args) -> int:
    """Best threshold per (policy, d), against the lower bound."""
    params = _require_stochastic(sc)
    bound = sa.universal_lower_bound(params, sc.cost)
    best: dict = {}
    for name, thr, d in sorted(_cells(sc, args), key=_sort_key):
        res = _simulate_cell(sc, name, thr, d, _seed(sc, args))
        key = (name, d)
        if key not in best or res.avg_cost < best[key][1].avg_cost:
            best[key] = (thr, res)
    rows = []
    for (name, d), (thr, res) in sorted(best.items()):
        label = _policy_label(thr)
        rows.append({
            "policy": name, "d": d, "mean_deadline": math.inf if d == 0 else 1.0 / d,
            "threshold": None if math.isnan(label) else label,
            "avg_cost": res.avg_cost, "ci": res.ci_halfwidth, "lower_bound": bound,
        })
    write_table(COMPARE_COLUMNS, rows, args.out)
    return EXIT_OK


COMMANDS = {
    "offline-preemptive": cmd_offline_preemptive,
    "offline-nonpreemptive": cmd_offline_nonpreemptive,
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridsched", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for verb in COMMANDS:
        p = sub.add_parser(verb)
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--out", help="output file (stdout when omitted)")
        if verb == "offline-nonpreemptive":
            mode = p.add_mutually_exclusive_group()
            mode.add_argument("--exact", action="store_true", help="exact bin packing (default)")
            mode.add_argument("--ffd", action="store_true", help="first-fit decreasing")
            p.add_argument("--grid", type=float, help="exhaustive search over start times on this grid")
        if verb in ("simulate", "compare"):
            p.add_argument("--seed", type=int, help="override the scenario seed")
            p.add_argument("--policy", choices=se.POLICY_NAMES)
            p.add_argument("--threshold", type=float)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sc = load_scenario(args.scenario)
        return COMMANDS[args.command](sc, args)
    except (ScenarioError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
