"""Trace files: writers and readers for the csv and jsonl layouts.

Every table has a fixed column list; csv files start with a header row and
jsonl files hold one object per row. Floats are written with a fixed number
of decimals so identical traces give byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .simengine import SimTrace

TRACE_FORMAT_VERSION = 1
FORMATS = ("csv", "jsonl")

SCHEMAS = {
    "truth": ("t", "kind", "id", "x", "y", "alive"),
    "scans": ("t", "x", "y", "truth_tag"),
    "estimates_agents": ("t", "label_birth", "label_index", "x", "y"),
    "estimates_targets": ("t", "label_birth", "label_index", "x", "y"),
    "plans": ("replan_index", "t", "agent_id", "target_id", "wp_seq", "x", "y"),
    "events": ("t", "kind", "detail"),
    "summary": ("id", "outcome", "t_final"),
}

# column parsers used by the readers
_INT = {"id", "alive", "label_birth", "label_index", "replan_index", "agent_id", "target_id", "wp_seq"}
_FLOAT = {"t", "x", "y", "t_final"}
_TIME_DECIMALS = 2
_POS_DECIMALS = 4


def _t(v: float) -> float:
    return round(float(v), _TIME_DECIMALS)


def _p(v: float) -> float:
    return round(float(v), _POS_DECIMALS)


def trace_tables(trace: SimTrace) -> dict[str, list[tuple]]:
    """Rows of every table, in schema column order."""
    tables: dict[str, list[tuple]] = {k: [] for k in SCHEMAS}
    tables["truth"] = [(_t(t), kind, int(i), _p(x), _p(y), int(alive)) for t, kind, i, x, y, alive in trace.truth]
    for t, scan in trace.scans:
        tags = scan.tags or ("",) * len(scan)
        tables["scans"].extend((_t(t), _p(x), _p(y), tag) for (x, y), tag in zip(scan.points, tags))
    for name, est in (("estimates_agents", trace.agent_estimates), ("estimates_targets", trace.target_estimates)):
        rows = tables[name]
        for t, items in est:
            rows.extend((_t(t), lab.birth_step, lab.birth_index, _p(pos[0]), _p(pos[1])) for lab, pos in items)
    for plan, agents, targets in zip(trace.plans, trace.plan_agents, trace.plan_targets):
        for aid in plan.agent_ids:
            if aid not in plan.assignment:
                continue
            tid = plan.assignment[aid]
            for k, (x, y) in enumerate(plan.waypoints[aid]):
                tables["plans"].append((plan.replan_index, _t(plan.t), agents[aid], targets[tid], k, _p(x), _p(y)))
    tables["events"] = [(_t(e.t), e.kind, e.detail) for e in trace.events]
    tables["summary"] = [(i, out, _t(tf)) for i, (out, tf) in sorted(trace.summary.items())]
    return tables


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_table(path: Path, columns, rows, fmt: str) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        if fmt == "csv":
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
        elif fmt == "jsonl":
            for r in rows:
                fh.write(json.dumps(dict(zip(columns, r)), separators=(",", ":")) + "\n")
        else:
            raise ValueError(f"unknown trace format {fmt!r}")


def write_trace(trace: SimTrace, out_dir, fmt: str = "csv") -> Path:
    """Write all tables plus meta.json into ``out_dir`` (created if needed)."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown trace format {fmt!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, rows in trace_tables(trace).items():
        write_table(out / f"{name}.{fmt}", SCHEMAS[name], rows, fmt)
    meta = {
        "trace_format_version": TRACE_FORMAT_VERSION,
        "format": fmt,
        "scenario": trace.scenario,
        "seed": trace.seed,
        "dyn_rate": trace.dyn_rate,
        "filter_rate": trace.filter_rate,
        "replan_rate": trace.replan_rate,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


def _parse(col: str, v):
    if col in _INT:
        return int(v)
    if col in _FLOAT:
        return float(v)
    return v


def read_table(path) -> list[dict]:
    """Rows of one csv or jsonl table as dicts with typed values."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"trace table not found: {path}")
    with path.open(encoding="utf-8", newline="") as fh:
        if path.suffix == ".csv":
            reader = csv.DictReader(fh)
            rows = list(reader)
        elif path.suffix == ".jsonl":
            rows = [json.loads(line) for line in fh if line.strip()]
        else:
            raise ValueError(f"unknown table format: {path}")
    out = []
    for lineno, r in enumerate(rows, start=2):
        try:
            out.append({k: _parse(k, v) for k, v in r.items()})
        except (TypeError, ValueError) as exc:
            raise ValueError(f"{path}: bad row {lineno}: {exc}") from None
    return out


def detect_format(trace_dir) -> str:
    d = Path(trace_dir)
    for fmt in FORMATS:
        if (d / f"truth.{fmt}").exists():
            return fmt
    raise FileNotFoundError(f"no truth table in {d}")


def read_trace(trace_dir, tables=tuple(SCHEMAS)) -> dict[str, list[dict]]:
    """Load the requested tables of a trace directory."""
    d = Path(trace_dir)
    fmt = detect_format(d)
    return {name: read_table(d / f"{name}.{fmt}") for name in tables}
