"""Regenerate the bundled stochastic scenario files."""

import json
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "scenarios"
QUADRATIC = {"type": "quadratic", "c2": 1.0, "c1": 0.0, "c0": 0.0}


def dump(name: str, body: dict) -> None:
    path = OUT / f"{name}.json"
    path.write_text(json.dumps({"name": name, **body}, indent=2) + "\n")
    print(path)


def main() -> None:
    sim = {"horizon": 20000.0, "seed": 7, "replications": 1, "batches": 20, "warmup": 0.1}
    dump("stochastic_default", {
        "cost": QUADRATIC,
        "stochastic": {"lambda": 4.0, "s": 1.0, "d": [1.0], "power_dist": [[1.0, 1.0]]},
        "policies": [{"name": "default"}],
        "simulation": sim,
        "analysis": {"epsilons": [1.0, 2.0, 4.0]},
    })
    dump("stochastic_cr", {
        "cost": QUADRATIC,
        "stochastic": {"lambda": 8.0, "s": 1.0, "d": [1.0, 0.1, 0.01], "power_dist": [[1.0, 1.0]]},
        "policies": [
            {"name": "default"},
            {"name": "cr", "thresholds": [9.0, 10.0]},
            {"name": "tp", "thresholds": [9.0, 10.0]},
            {"name": "etp", "thresholds": [8.0, 9.0]},
        ],
        "simulation": sim,
        "analysis": {"epsilons": [0.5, 1.0, 2.0, 5.0, 10.0, 40.0]},
    })
    dump("stochastic_cr_nodeadline", {
        "cost": QUADRATIC,
        "stochastic": {"lambda": 8.0, "s": 1.0, "d": [0.0], "power_dist": [[1.0, 1.0]]},
        "policies": [{"name": "cr", "thresholds": [9.0, 12.0]}],
        "simulation": sim,
        "analysis": {"epsilons": [1.0]},
    })
    dump("stochastic_mixed_power", {
        "cost": {"type": "piecewise", "segments": [[1.0, 0.0], [3.0, -6.0], [6.0, -18.0]]},
        "stochastic": {"lambda": 3.0, "s": 1.0, "d": [0.5, 0.05], "power_dist": [[1.0, 0.5], [2.0, 0.5]]},
        "policies": [
            {"name": "default"},
            {"name": "cr", "thresholds": [5.0, 6.0]},
            {"name": "tp", "thresholds": [{"base": 5.0, "steps": [[4, 6.0], [10, 8.0]]}]},
            {"name": "etp", "thresholds": [5.0]},
        ],
        "simulation": sim,
        "analysis": {"epsilons": [1.0]},
    })


if __name__ == "__main__":
    main()
