"""Sweep each policy's threshold at fixed load and report the best one.

    python scripts/threshold_sweep.py --lam 8 --d 0.1 --thresholds 8 9 10 11 12
"""

import argparse

from gridsched.sim_engine import CRPolicy, SimConfig, tune_threshold
from gridsched.stochastic_analysis import StochasticParams, universal_lower_bound
from gridsched.task_model import QuadraticCost


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lam", type=float, default=8.0)
    ap.add_argument("--d", type=float, default=0.1)
    ap.add_argument("--thresholds", type=float, nargs="+", default=[8, 9, 10, 11, 12, 14])
    ap.add_argument("--horizon", type=float, default=1e5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    C = QuadraticCost(1.0)
    params = StochasticParams(args.lam, 1.0, args.d)
    config = SimConfig(params, CRPolicy(args.thresholds[0]), C, args.horizon, seed=args.seed)
    print(f"lower bound {universal_lower_bound(params, C):.4f}")
    for name in ("cr", "tp", "etp"):
        best, sweep = tune_threshold(config, name, args.thresholds)
        for thr, res in sweep:
            mark = "*" if thr == best else " "
            print(f"{name:4s} {thr:6g} {res.avg_cost:10.4f} +- {res.ci_halfwidth:.4f} {mark}")


if __name__ == "__main__":
    main()
