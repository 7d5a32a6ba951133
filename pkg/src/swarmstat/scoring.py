"""Scoring of written traces: per-scan OSPA for both filters and a mission summary."""

from __future__ import annotations

import json
import math
from collections import defaultdict
from pathlib import Path

from .simengine import ospa
from .traceio import read_trace


def filter_times(meta: dict, events: list[dict]) -> list[float]:
    """Filter tick times from the first tick up to the termination event."""
    end = max((e["t"] for e in events if e["kind"] == "termination"), default=0.0)
    n = int(math.floor(end * meta["filter_rate"] + 1e-9))
    return [round(k / meta["filter_rate"], 2) for k in range(1, n + 1)]


def _by_time(rows) -> dict:
    out = defaultdict(list)
    for r in rows:
        out[r["t"]].append((r["x"], r["y"]))
    return out


def score_tables(tables: dict, meta: dict, cutoff: float = 100.0, order: float = 1.0):
    """(per-scan rows (t, agent_ospa, target_ospa), summary dict).

    Truth agents count while alive and before reaching their target, since a
    reached agent leaves the scene; serviced targets carry alive = 0.
    """
    reached_at = {r["id"]: r["t_final"] for r in tables["summary"] if r["outcome"] == "reached"}
    truth_a: dict = defaultdict(list)
    truth_t: dict = defaultdict(list)
    for r in tables["truth"]:
        if r["kind"] == "agent":
            if r["alive"] and not (r["id"] in reached_at and reached_at[r["id"]] <= r["t"]):
                truth_a[r["t"]].append((r["x"], r["y"]))
        elif r["alive"]:
            truth_t[r["t"]].append((r["x"], r["y"]))
    est_a = _by_time(tables["estimates_agents"])
    est_t = _by_time(tables["estimates_targets"])
    rows = []
    for t in filter_times(meta, tables["events"]):
        rows.append((t, ospa(est_a.get(t, []), truth_a.get(t, []), cutoff, order),
                     ospa(est_t.get(t, []), truth_t.get(t, []), cutoff, order)))
    outcomes = [r["outcome"] for r in tables["summary"]]
    survivors = [o for o in outcomes if o != "dead"]
    n_reached = sum(o == "reached" for o in survivors)
    summary = {
        "scenario": meta.get("scenario", ""),
        "seed": meta.get("seed", 0),
        "agents": len(outcomes),
        "survivors": len(survivors),
        "reached": n_reached,
        "completion_fraction": n_reached / len(survivors) if survivors else 0.0,
        "mission_complete": int(bool(survivors) and n_reached == len(survivors)),
        "replans": sum(e["kind"] == "replan" for e in tables["events"]),
        "deaths": sum(e["kind"] == "death" for e in tables["events"]),
        "spurious_extractions": sum(e["kind"] == "spurious_extraction" for e in tables["events"]),
        "mean_ospa_agents": sum(r[1] for r in rows) / len(rows) if rows else 0.0,
        "mean_ospa_targets": sum(r[2] for r in rows) / len(rows) if rows else 0.0,
        "ospa_cutoff": cutoff,
        "ospa_order": order,
    }
    return rows, summary


def score_dir(trace_dir, cutoff: float = 100.0, order: float = 1.0):
    d = Path(trace_dir)
    meta_path = d / "meta.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"trace metadata not found: {meta_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    tables = read_trace(d, ("truth", "estimates_agents", "estimates_targets", "events", "summary"))
    return score_tables(tables, meta, cutoff, order)
