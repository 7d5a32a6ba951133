"""Regenerate the figure-analog datasets and score each one.

Usage: python scripts/regenerate_figures.py [out_dir] [--seed N]
"""

import argparse
import json
from pathlib import Path

from swarmstat.cli import FIGURE_SCENARIOS, main


def run(out: Path, seed: int | None) -> None:
    argv = ["figures", "--out", str(out)]
    if seed is not None:
        argv += ["--seed", str(seed)]
    if main(argv) != 0:
        raise SystemExit(1)
    for name in FIGURE_SCENARIOS:
        if main(["score", str(out / name)]) != 0:
            raise SystemExit(1)
    table = {name: json.loads((out / name / "metrics.json").read_text()) for name in FIGURE_SCENARIOS}
    (out / "summary.json").write_text(json.dumps(table, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", nargs="?", default="figures")
    ap.add_argument("--seed", type=int, default=None)
    a = ap.parse_args()
    run(Path(a.out), a.seed)
