import json
import math

import numpy as np
import pytest

from swarmstat.cli import main
from swarmstat.scenario import bundled_scenario, save_scenario
from swarmstat.scoring import score_dir, score_tables
from swarmstat.simengine import run_simulation
from swarmstat.traceio import SCHEMAS, read_table, read_trace, trace_tables, write_trace

from .test_simengine import small_scenario


@pytest.fixture(scope="module")
def scen_file(tmp_path_factory):
    p = tmp_path_factory.mktemp("scen") / "small.yaml"
    save_scenario(small_scenario(params={"clutter_rate": 2.0, "detect_prob": 0.95, "max_time": 30.0}), p)
    return p


@pytest.fixture(scope="module")
def small_trace():
    return run_simulation(small_scenario(params={"clutter_rate": 2.0, "max_time": 30.0}))


def dir_bytes(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.is_file()}


# -- trace files -----------------------------------------------------------


@pytest.mark.parametrize("fmt", ["csv", "jsonl"])
def test_trace_round_trip(tmp_path, small_trace, fmt):
    write_trace(small_trace, tmp_path, fmt)
    tables = trace_tables(small_trace)
    back = read_trace(tmp_path)
    for name, cols in SCHEMAS.items():
        assert [tuple(r[c] for c in cols) for r in back[name]] == tables[name], name
    meta = json.loads((tmp_path / "meta.json").read_text())
    assert meta["format"] == fmt and meta["trace_format_version"] == 1


def test_csv_header_names_every_column(tmp_path, small_trace):
    write_trace(small_trace, tmp_path, "csv")
    for name, cols in SCHEMAS.items():
        text = (tmp_path / f"{name}.csv").read_text(encoding="utf-8")
        assert text.splitlines()[0] == ",".join(cols)
        assert text.endswith("\n")


def test_read_table_reports_bad_rows(tmp_path):
    p = tmp_path / "truth.csv"
    p.write_text("t,kind,id,x,y,alive\n0.0,agent,zero,1,2,1\n")
    with pytest.raises(ValueError, match="bad row 2"):
        read_table(p)
    with pytest.raises(FileNotFoundError):
        read_table(tmp_path / "missing.csv")


# -- run -------------------------------------------------------------------


def test_run_is_byte_identical(tmp_path, scen_file, capsys):
    for k in (1, 2):
        assert main(["run", "--scenario", str(scen_file), "--out", str(tmp_path / f"r{k}")]) == 0
    assert "surviving agents reached targets" in capsys.readouterr().out
    a, b = dir_bytes(tmp_path / "r1"), dir_bytes(tmp_path / "r2")
    assert set(a) == {f"{n}.csv" for n in SCHEMAS} | {"meta.json"}
    assert a == b


def test_batch_run_equals_standalone(tmp_path, scen_file):
    assert main(["run", "--scenario", str(scen_file), "--seed", "10", "--runs", "2", "--out", str(tmp_path / "b")]) == 0
    assert main(["run", "--scenario", str(scen_file), "--seed", "11", "--out", str(tmp_path / "s")]) == 0
    assert sorted(p.name for p in (tmp_path / "b").iterdir()) == ["seed_10", "seed_11"]
    assert dir_bytes(tmp_path / "b" / "seed_11") == dir_bytes(tmp_path / "s")


def test_jsonl_and_full_rate_truth(tmp_path, scen_file):
    assert main(["run", "--scenario", str(scen_file), "--format", "jsonl", "--decimate", "0",
                 "--out", str(tmp_path)]) == 0
    truth = read_table(tmp_path / "truth.jsonl")
    times = sorted({r["t"] for r in truth})
    assert times[1] - times[0] == pytest.approx(0.01)


def test_run_input_errors(tmp_path, capsys):
    assert main(["run", "--scenario", str(tmp_path / "nope.yaml")]) == 2
    assert "not found" in capsys.readouterr().err
    bad = tmp_path / "bad.yaml"
    bad.write_text("format_version: 1\nname: [unclosed\n")
    assert main(["run", "--scenario", str(bad)]) == 2
    assert main(["run", "--scenario", "fig3_analog", "--runs", "0"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["run", "--scenario", "fig3_analog", "--format", "xml"])
    assert exc.value.code == 2


def test_run_unwritable_output_is_io_error(tmp_path, scen_file):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", "--scenario", str(scen_file), "--out", str(blocker / "sub")]) == 1


# -- plan ------------------------------------------------------------------


def test_plan_writes_waypoints(tmp_path, capsys):
    assert main(["plan", "--scenario", "fig3_analog", "--out", str(tmp_path)]) == 0
    rows = read_table(tmp_path / "plans.csv")
    assert {r["agent_id"] for r in rows} == {0, 1, 2, 3}
    assert all(r["replan_index"] == 0 for r in rows)
    assert capsys.readouterr().out.count("->") == 4


def test_plan_walled_off_agent_is_infeasible(tmp_path, capsys):
    walls = [[r, 2] for r in range(9)]
    p = tmp_path / "walled.yaml"
    save_scenario(small_scenario(obstacles={"nodes": walls}), p)
    assert main(["plan", "--scenario", str(p), "--out", str(tmp_path / "o")]) == 3
    assert "infeasible" in capsys.readouterr().err
    assert main(["run", "--scenario", str(p), "--out", str(tmp_path / "o")]) == 3


# -- score -----------------------------------------------------------------


def synthetic_tables(extra=None):
    truth, est = [], []
    for k in range(1, 4):
        t = float(k)
        for i, (x, y) in enumerate([(0.0, 0.0), (50.0, 0.0)]):
            truth.append({"t": t, "kind": "agent", "id": i, "x": x + k, "y": y, "alive": 1})
            est.append({"t": t, "label_birth": 0, "label_index": i, "x": x + k, "y": y})
        truth.append({"t": t, "kind": "target", "id": 0, "x": 500.0, "y": 500.0, "alive": 1})
        if extra is not None:
            est.append({"t": t, "label_birth": k, "label_index": 0, "x": extra[0], "y": extra[1]})
    return {
        "truth": truth,
        "estimates_agents": est,
        "estimates_targets": [{"t": float(k), "label_birth": 0, "label_index": 0, "x": 500.0, "y": 500.0}
                              for k in range(1, 4)],
        "events": [{"t": 3.0, "kind": "termination", "detail": "time cap reached"}],
        "summary": [{"id": 0, "outcome": "incomplete", "t_final": 3.0}, {"id": 1, "outcome": "incomplete", "t_final": 3.0}],
    }


META = {"filter_rate": 1.0, "scenario": "synthetic", "seed": 0}


def test_score_perfect_estimates_is_zero():
    rows, summary = score_tables(synthetic_tables(), META)
    assert [r[0] for r in rows] == [1.0, 2.0, 3.0]
    assert all(r[1] == 0.0 and r[2] == 0.0 for r in rows)
    assert summary["mean_ospa_agents"] == 0.0 and summary["completion_fraction"] == 0.0


def test_score_extra_point_cardinality_penalty():
    c = 100.0
    rows, _ = score_tables(synthetic_tables(extra=(900.0, 900.0)), META, cutoff=c, order=1.0)
    assert all(r[1] == pytest.approx(c / 3) for r in rows)
    rows, _ = score_tables(synthetic_tables(extra=(900.0, 900.0)), META, cutoff=c, order=2.0)
    assert all(r[1] == pytest.approx(math.sqrt(c**2 / 3)) for r in rows)


def test_score_command_and_errors(tmp_path, small_trace, capsys):
    write_trace(small_trace, tmp_path / "tr", "csv")
    assert main(["score", str(tmp_path / "tr"), "--out", str(tmp_path / "sc")]) == 0
    metrics = json.loads((tmp_path / "sc" / "metrics.json").read_text())
    ospa_rows = read_table(tmp_path / "sc" / "ospa.csv")
    assert len(ospa_rows) == int(small_trace.end_time)
    assert metrics["replans"] == small_trace.n_replans
    assert "completion" in capsys.readouterr().out
    assert main(["score", str(tmp_path / "empty")]) == 1
    (tmp_path / "tr" / "truth.csv").write_text("t,kind,id,x,y,alive\nbad,agent,0,0,0,1\n")
    assert main(["score", str(tmp_path / "tr")]) == 2


def test_clutter_free_nominal_agent_ospa(tmp_path):
    sc = bundled_scenario("fig3_analog").with_params(clutter_rate=0.0)
    write_trace(run_simulation(sc), tmp_path)
    _, summary = score_dir(tmp_path)
    sigma_max = math.sqrt(max(np.linalg.eigvalsh(sc.params.R_z)))
    assert summary["mean_ospa_agents"] < 3 * sigma_max
    assert summary["mission_complete"] == 1


def test_figures_subset(tmp_path, capsys):
    assert main(["figures", "--only", "fig3_analog", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "fig3_analog" / "truth.csv").exists()
    assert capsys.readouterr().out.startswith("fig3_analog:")
