"""Regenerate the bundled offline scenario files."""

import json
from pathlib import Path

from gridsched.task_model import random_tasks, tasks_to_json

OUT = Path(__file__).resolve().parent.parent / "scenarios"
QUADRATIC = {"type": "quadratic", "c2": 1.0, "c1": 0.0, "c0": 0.0}


def dump(name: str, body: dict) -> None:
    path = OUT / f"{name}.json"
    path.write_text(json.dumps({"name": name, **body}, indent=2) + "\n")
    print(path)


def main() -> None:
    dump("offline_two_task", {
        "cost": QUADRATIC,
        "offline": {
            "horizon": 2.0,
            "tasks": [
                {"id": 0, "arrival": 0.0, "duration": 1.0, "power": 1.0, "deadline": 2.0},
                {"id": 1, "arrival": 0.0, "duration": 1.0, "power": 1.0, "deadline": 2.0},
            ],
        },
    })
    dump("offline_random5", {
        "cost": QUADRATIC,
        "offline": {"horizon": 4.0, "tasks": tasks_to_json(random_tasks(5, 4.0, seed=20240501))},
    })
    dump("packing_small", {"cost": QUADRATIC, "offline": {"sizes": [3, 3, 2, 2], "D": 5, "p": 1}})
    dump("packing_ffd_gap", {"cost": QUADRATIC, "offline": {"sizes": [4, 3, 3, 2, 2, 2], "D": 8, "p": 1}})


if __name__ == "__main__":
    main()
