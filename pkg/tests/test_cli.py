import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from oracles import R_MEAN, capsule_area
from routevv.cli import load_config, main, round_half_up
from routevv.geo_core import RoutePolyline
from routevv.netroute import read_manifest
from routevv.popgrid import PopulationGrid, save_grid
from routevv.route_io import RouteDocument, write_kml


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["gen-network", "--seed", "5", "--nodes", "90", "--origins", "4", "--with-grid",
                 "--out", str(root / "net")]) == 0
    return root


def cfg_path(ws):
    return str(ws / "net" / "config.json")


def test_gen_network_outputs(workspace):
    names = sorted(os.listdir(workspace / "net"))
    assert names == ["config.json", "day.asc", "edges.csv", "night.asc", "nodes.csv", "origins.txt"]
    cfg = json.loads((workspace / "net" / "config.json").read_text())
    assert cfg["seed"] == 5 and cfg["origins"] == ["@origins.txt"]


def test_route_feasible_infeasible_and_unknown(workspace, capsys):
    cfg = json.loads((workspace / "net" / "config.json").read_text())
    origins = (workspace / "net" / "origins.txt").read_text().split()
    out = str(workspace / "route")
    args = ["route", "--config", cfg_path(workspace), "--out", out, "--dest", cfg["destination"]]
    assert main(args + ["--origin", origins[0]]) == 0
    assert os.path.exists(os.path.join(out, "routes", f"{origins[0]}-{cfg['destination']}.kml"))
    isolated = origins[-1]  # isolated nodes are listed last
    assert main(args + ["--origin", isolated]) == 0
    assert "FAILED" in capsys.readouterr().out
    cases = {c.id: c for c in read_manifest(os.path.join(out, "manifest.jsonl"))}
    assert not cases[f"{origins[0]}-800"].failed
    assert cases[f"{isolated}-2500"].failed
    assert main(args + ["--origin", "NOPE"]) == 2
    assert "NOPE" in capsys.readouterr().err


def uniform_workspace(tmp_path, density=250.0):
    cs = 0.0005
    nr, nc = 200, 300
    xll, yll = -97.05, 38.95
    g0 = PopulationGrid(nc, nr, xll, yll, cs, -9999.0, np.zeros((nr, nc)), np.zeros((nr, nc)))
    per = g0.cell_areas_m2()[:, None] / 1e6 * density * np.ones((1, nc))
    save_grid(PopulationGrid(nc, nr, xll, yll, cs, -9999.0, per, per), tmp_path / "d.asc", tmp_path / "n.asc")
    L = 5000.0
    dlon = math.degrees(L / (R_MEAN * math.cos(math.radians(39.0))))
    route = RoutePolyline.from_coords([(-97.0, 39.0), (-97.0 + dlon, 39.0)])
    write_kml(RouteDocument("straight", route, {}), tmp_path / "straight.kml")
    far = RoutePolyline.from_coords([(10.0, 10.0), (10.05, 10.0)])
    write_kml(RouteDocument("far", far, {}), tmp_path / "far.kml")
    return L


def test_analyze_straight_route_over_uniform_grid(tmp_path, capsys):
    L = uniform_workspace(tmp_path)
    args = ["analyze", str(tmp_path / "straight.kml"), "--day", str(tmp_path / "d.asc"),
            "--night", str(tmp_path / "n.asc"), "--out", str(tmp_path / "o")]
    assert main(args + ["--json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert len(payload["results"]) == 2
    for row, w in zip(payload["results"], (800.0, 2500.0)):
        area_km2 = capsule_area(L, w) / 1e6
        prim = row["primary"]
        assert prim["width"] == w
        assert prim["density"]["area"] == pytest.approx(area_km2, rel=5e-3)
        # Centroid rule: the route runs along a row boundary, so up to one cell
        # row per side may fall out (55 m rows against a 5 km route).
        row_slack = 2 * 0.0005 * math.pi / 180 * R_MEAN * L / 1e6 * 250.0
        assert abs(prim["population"]["average"] - 250.0 * area_km2) <= row_slack
        assert row["independent"]["population"]["average"] == pytest.approx(250.0 * area_km2, rel=0.01)
        assert prim["distance_geodesic"] == pytest.approx(L, rel=1e-6)  # chord of the parallel
    assert payload["config"]["widths"] == [800.0, 2500.0]
    assert os.path.exists(tmp_path / "o" / "analysis-straight.json")

    assert main(args) == 0
    table = capsys.readouterr().out.splitlines()
    rows = [ln for ln in table if ln.strip().startswith(("800", "2500"))]
    assert len(rows) == 4  # two widths x two method families
    expect = round_half_up(250.0 * capsule_area(L, 800.0) / 1e6)
    independent_800 = [ln for ln in rows if ln.split()[:2] == ["800", "independent"]][0]
    assert abs(int(independent_800.split()[4]) - expect) <= 0.01 * expect
    assert independent_800.split()[-1] == "5.000"


def test_analyze_off_grid_and_bad_input(tmp_path, capsys):
    uniform_workspace(tmp_path)
    grid = ["--day", str(tmp_path / "d.asc"), "--night", str(tmp_path / "n.asc"), "--out", str(tmp_path / "o")]
    assert main(["analyze", str(tmp_path / "far.kml"), "--width", "800", "--json"] + grid) == 0
    captured = capsys.readouterr()
    assert "does not overlap" in captured.err
    assert json.loads(captured.out)["results"][0]["primary"]["population"]["average"] == 0
    (tmp_path / "bad.kml").write_text("<kml><Document><LineString><coordinates>1,2 x")
    assert main(["analyze", str(tmp_path / "bad.kml")] + grid) == 2
    assert "bad.kml" in capsys.readouterr().err


def test_round_half_up():
    assert [round_half_up(x) for x in (0.5, 1.5, 2.5, 2.4999)] == [1, 2, 3, 2]


def test_suite_pass_then_sabotage(workspace, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["suite", "--config", cfg_path(workspace), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["verdict"] == "pass" and summary["seed"] == 5
    assert summary["counts"]["route_failures"] >= 2
    assert (out / "report.csv").read_text().splitlines()[0] == "case_id,metric,candidate,reference,pct_diff,gate"

    # Add one case measured on a coarse grid (cell edge = w) to the manifest.
    w = 800.0
    cs = math.degrees(w / R_MEAN)
    rng = np.random.default_rng(0)
    day = rng.integers(500, 1500, (12, 12)).astype(float)
    save_grid(PopulationGrid(12, 12, 0.0, 0.0, cs, -9999.0, day, day), out / "cd.asc", out / "cn.asc")
    route = RoutePolyline.from_coords([(4 * cs, 6 * cs), (7 * cs, 6 * cs)])
    write_kml(RouteDocument("coarse", route, {}), out / "routes" / "coarse.kml")
    with open(out / "manifest.jsonl", "a") as fh:
        fh.write(json.dumps({"id": "coarse-800", "origin": "x", "destination": "y", "width": 800.0,
                             "mode_set": ["rail"], "kml": "routes/coarse.kml",
                             "grid": {"day": "cd.asc", "night": "cn.asc"}}) + "\n")
    capsys.readouterr()
    args = ["suite", "--config", cfg_path(workspace), "--manifest", str(out / "manifest.jsonl"),
            "--out", str(tmp_path / "run2")]
    assert main(args) == 1
    assert "FAIL" in capsys.readouterr().out
    rows = (tmp_path / "run2" / "report.csv").read_text().splitlines()
    assert any(r.startswith("coarse-800,population_average,") and r.endswith(",fail") for r in rows)


def test_suite_needs_cases(tmp_path, capsys):
    assert main(["suite", "--out", str(tmp_path)]) == 2
    (tmp_path / "empty.jsonl").write_text("")
    assert main(["suite", "--manifest", str(tmp_path / "empty.jsonl"), "--out", str(tmp_path / "o")]) == 2
    assert json.loads((tmp_path / "o" / "summary.json").read_text())["vacuous"] is True


def test_suite_rejects_non_standard_width(workspace, tmp_path):
    assert main(["suite", "--config", cfg_path(workspace), "--width", "1000", "--out", str(tmp_path)]) == 2


def spike_kml(path):
    a = (10.0, 45.0)
    k = math.cos(math.radians(45.0))
    pts = [(a[0] - 0.02, a[1]), a, (a[0] + math.degrees(50 / (R_MEAN * k)), a[1]), a, (a[0], a[1] + 0.02)]
    write_kml(RouteDocument("spiky", RoutePolyline.from_coords(pts), {}), path)


def test_validate_exit_codes(tmp_path, capsys):
    write_kml(RouteDocument("clean", RoutePolyline.from_coords([(0, 0), (0.01, 0), (0.02, 0.005)]), {}),
              tmp_path / "clean.kml")
    assert main(["validate", str(tmp_path / "clean.kml"), "--json"]) == 0
    assert json.loads(capsys.readouterr().out)["aberrations"] == []
    spike_kml(tmp_path / "spike.kml")
    assert main(["validate", str(tmp_path / "spike.kml"), "--json", "--out", str(tmp_path / "v")]) == 1
    found = json.loads(capsys.readouterr().out)["aberrations"]
    assert [a["kind"] for a in found] == ["spike"]
    assert os.path.exists(tmp_path / "v" / "validate-spiky.json")
    (tmp_path / "broken.kml").write_text("<kml>")
    assert main(["validate", str(tmp_path / "broken.kml")]) == 2


def test_validate_threshold_flags(tmp_path, capsys):
    write_kml(RouteDocument("r", RoutePolyline.from_coords([(0, 0), (0.05, 0)]), {}), tmp_path / "r.kml")
    assert main(["validate", str(tmp_path / "r.kml")]) == 0
    assert main(["validate", str(tmp_path / "r.kml"), "--jump-m", "5000"]) == 1
    assert "discontinuity" in capsys.readouterr().out


def test_config_precedence(tmp_path, monkeypatch):
    (tmp_path / "c.json").write_text(json.dumps({"widths": [800], "seed": 3, "nodes": "n.csv",
                                                 "thresholds": {"jump_m": 7000}}))
    cfg = load_config(str(tmp_path / "c.json"), {"widths": [2500.0], "seed": None})
    assert cfg.widths == [2500.0] and cfg.seed == 3
    assert cfg.nodes == str(tmp_path / "n.csv")
    assert cfg.thresholds.jump_m == 7000
    monkeypatch.setenv("ROUTEVV_CONFIG", str(tmp_path / "c.json"))
    assert load_config(None, {}).seed == 3
    assert load_config(None, {"thr_jump_m": 100.0}).thresholds.jump_m == 100.0
    (tmp_path / "bad.json").write_text(json.dumps({"spacing_factor": 4}))
    with pytest.raises(ValueError):
        load_config(str(tmp_path / "bad.json"), {})


def run_module(*args, cwd=None):
    env = dict(os.environ)
    env.pop("ROUTEVV_CONFIG", None)
    return subprocess.run([sys.executable, "-m", "routevv", *args], capture_output=True, text=True, cwd=cwd, env=env)


def test_module_entry_point(tmp_path):
    spike_kml(tmp_path / "spike.kml")
    proc = run_module("validate", str(tmp_path / "spike.kml"))
    assert proc.returncode == 1 and "spike" in proc.stdout
    assert run_module("validate", str(tmp_path / "missing.kml")).returncode == 2
    assert run_module("--help").returncode == 0
