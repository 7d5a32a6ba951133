"""Monte Carlo completion study of one scenario over consecutive seeds.

Prints one line per seed and the aggregate completion rate. Traces are not
written; use ``swarmstat run --runs`` for that.

Usage: python scripts/monte_carlo.py fig6_analog --seeds 50 [--workers 4]
"""

import argparse
from concurrent.futures import ProcessPoolExecutor

from swarmstat.cli import load
from swarmstat.simengine import run_simulation


def one(job):
    name, seed = job
    tr = run_simulation(load(name, seed, False))
    reached, surv = tr.completion()
    return seed, reached, surv, tr.mission_complete(), tr.n_replans, len(tr.events_of("spurious_extraction")), tr.end_time


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("scenario", help="scenario file or bundled scenario name")
    ap.add_argument("--seeds", type=int, default=50)
    ap.add_argument("--first", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    a = ap.parse_args()
    jobs = [(a.scenario, s) for s in range(a.first, a.first + a.seeds)]
    if a.workers > 1:
        with ProcessPoolExecutor(a.workers) as pool:
            rows = list(pool.map(one, jobs))
    else:
        rows = [one(j) for j in jobs]
    print("seed reached survivors complete replans spurious t_end")
    for r in rows:
        print(*r[:3], int(r[3]), r[4], r[5], f"{r[6]:.2f}")
    done = sum(r[3] for r in rows)
    print(f"complete {done}/{len(rows)} ({done / len(rows):.0%})")


if __name__ == "__main__":
    main()
