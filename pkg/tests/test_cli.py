import json

import numpy as np
import pytest
import yaml

from linkwave.cli import main
from linkwave.io import read_flows
from linkwave.network import TimeGrid, network_to_dict
from linkwave.scenarios import fixture_path, one_junction_network

N = 8
GRID = TimeGrid(dt=0.005, n_steps=N)


def write_config(tmp_path, inflows, name="net.yaml", options=None):
    net = one_junction_network({k: np.asarray(v, float) for k, v in inflows.items()})
    path = tmp_path / name
    path.write_text(yaml.safe_dump(network_to_dict(net, GRID, options)))
    return path


def write_plan(tmp_path, slots, name="plan.csv"):
    path = tmp_path / name
    rows = ["# linkwave-plan v1", "step,junction,green_slot"] + [f"{j},J,{s}" for j, s in enumerate(slots)]
    path.write_text("\n".join(rows) + "\n")
    return path


@pytest.fixture
def small(tmp_path):
    cfg = write_config(tmp_path, {"I1": np.full(N, 900.0), "I2": np.full(N, 600.0)})
    plan = write_plan(tmp_path, [1, 1, 2, 2, 1, 1, 2, 2])
    return cfg, plan


def read_json(path):
    return json.loads(path.read_text())


def test_zero_inflow_simulate(tmp_path):
    cfg = write_config(tmp_path, {"I1": np.zeros(N), "I2": np.zeros(N)})
    plan = write_plan(tmp_path, [1] * N)
    out = tmp_path / "run"
    assert main(["simulate", str(cfg), "--plan", str(plan), "--out", str(out)]) == 0
    m = read_json(out / "metrics.json")
    assert m["throughput"] == 0 and m["total_delay"] == 0 and m["occupancy_integral"] == 0
    for name in ("flows.csv", "metrics.json", "cumulative.png", "plan.png", "manifest.json"):
        assert (out / name).exists()
    manifest = read_json(out / "manifest.json")
    assert manifest["command"] == "simulate"
    assert set(manifest["outputs"]) == {"flows.csv", "metrics.json", "cumulative.png", "plan.png"}
    assert len(manifest["config_sha256"]) == 64


def test_malformed_plan_exits_2(tmp_path, small, capsys):
    cfg, _ = small
    bad = tmp_path / "bad.csv"
    bad.write_text("# linkwave-plan v1\nstep,junction,u1,u2\n3,J,1,1\n")
    assert main(["simulate", str(cfg), "--plan", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "exactly one phase must be green" in capsys.readouterr().err


def test_missing_config_exits_2(tmp_path, small):
    _, plan = small
    assert main(["simulate", str(tmp_path / "nope.yaml"), "--plan", str(plan), "--out", str(tmp_path / "o")]) == 2


def test_invalid_network_exits_2(tmp_path, small):
    _, plan = small
    cfg = write_config(tmp_path, {"I1": np.full(N, 3500.0), "I2": np.zeros(N)}, name="bad.yaml")
    assert main(["simulate", str(cfg), "--plan", str(plan), "--out", str(tmp_path / "o")]) == 2


def test_usage_error_exits_1(small):
    cfg, _ = small
    with pytest.raises(SystemExit) as err:
        main(["simulate", str(cfg)])
    assert err.value.code == 1
    with pytest.raises(SystemExit) as err:
        main(["optimize", str(cfg), "--out", "x", "--solver", "gurobi"])
    assert err.value.code == 1


def test_mps_only_reports_binaries(tmp_path, small, capsys):
    cfg, _ = small
    out = tmp_path / "mps"
    assert main(["optimize", str(cfg), "--solver", "mps-only", "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    manifest = read_json(out / "manifest.json")
    binaries = manifest["result"]["model"]["binaries"]
    assert f"{binaries} binaries" in printed
    # per link and step: two regime bits and two selectors (one on sources); per junction step: six
    assert binaries == N * (4 * 2 + 2 * 3 + 6)
    text = (out / "model.mps").read_text()
    assert text.startswith("NAME LINKWAVE\nOBJSENSE\n    MAX\n")


def test_optimize_then_verify(tmp_path, small, capsys):
    cfg, _ = small
    out = tmp_path / "opt"
    assert main(["optimize", str(cfg), "--out", str(out), "--no-figures"]) == 0
    metrics = read_json(out / "metrics.json")
    assert metrics["status"] == "optimal"
    assert metrics["verification_max_deviation"] <= 1e-5
    capsys.readouterr()
    code = main(["verify", str(cfg), "--plan", str(out / "plan.csv"), "--flows", str(out / "flows.csv"),
                 "--out", str(tmp_path / "ver")])
    assert code == 0
    assert "PASS" in capsys.readouterr().out
    assert read_json(tmp_path / "ver" / "verification.json")["verdict"] == "PASS"

    # nudge one flow beyond tolerance: verify must fail and name the cell
    lines = (out / "flows.csv").read_text().splitlines()
    for i, ln in enumerate(lines):
        if ln.startswith("5,I3,"):
            parts = ln.split(",")
            parts[3] = repr(float(parts[3]) + 0.5)
            lines[i] = ",".join(parts)
    bad = tmp_path / "bad_flows.csv"
    bad.write_text("\n".join(lines) + "\n")
    code = main(["verify", str(cfg), "--plan", str(out / "plan.csv"), "--flows", str(bad)])
    printed = capsys.readouterr().out
    assert code == 4
    assert "FAIL" in printed and "link I3" in printed and "step 5" in printed


def test_import_solution_command(tmp_path, small, capsys):
    cfg, _ = small
    out = tmp_path / "opt"
    assert main(["optimize", str(cfg), "--out", str(out), "--no-figures"]) == 0
    imp = tmp_path / "imp"
    assert main(["import-solution", str(cfg), str(out / "solution.txt"), "--out", str(imp)]) == 0
    assert (imp / "plan.csv").read_text() == (out / "plan.csv").read_text()
    bad = tmp_path / "bad.txt"
    bad.write_text("U_J_S1_T00 1\nU_J_S2_T00 1\n")
    assert main(["import-solution", str(cfg), str(bad), "--out", str(tmp_path / "x")]) == 2
    assert "rejected" in capsys.readouterr().err


def test_highs_route(tmp_path, small):
    pytest.importorskip("highspy")
    cfg, _ = small
    a, b = tmp_path / "emb", tmp_path / "hi"
    assert main(["optimize", str(cfg), "--out", str(a), "--no-figures", "--gap-tol", "0"]) == 0
    assert main(["optimize", str(cfg), "--out", str(b), "--no-figures", "--solver", "highs", "--gap-tol", "0"]) == 0
    oa, ob = read_json(a / "metrics.json")["objective"], read_json(b / "metrics.json")["objective"]
    assert oa == pytest.approx(ob, rel=1e-7)


def test_seeded_runs_are_identical(tmp_path, small):
    cfg, plan = small
    runs = []
    for name in ("a", "b"):
        out = tmp_path / name
        main(["simulate", str(cfg), "--plan", str(plan), "--seed", "7", "--out", str(out)])
        runs.append(out)
    for name in ("flows.csv", "metrics.json", "cumulative.png", "plan.png"):
        assert (runs[0] / name).read_bytes() == (runs[1] / name).read_bytes(), name
    ma, mb = read_json(runs[0] / "manifest.json"), read_json(runs[1] / "manifest.json")
    assert ma["outputs"] == mb["outputs"]
    assert ma["seed"] == 7 and ma["prng"]
    # the seed really replaced the config's inflows
    seeded = read_flows(runs[0] / "flows.csv", ["I1", "I2", "I3", "I4"], GRID.dt, N)
    assert seeded.q_bar[0, 0] != 900.0


def test_verify_zero_inflow_passes(tmp_path, capsys):
    cfg = write_config(tmp_path, {"I1": np.zeros(N), "I2": np.zeros(N)})
    plan = write_plan(tmp_path, [2] * N)
    out = tmp_path / "sim"
    main(["simulate", str(cfg), "--plan", str(plan), "--out", str(out), "--no-figures"])
    capsys.readouterr()
    assert main(["verify", str(cfg), "--plan", str(plan), "--flows", str(out / "flows.csv")]) == 0
    assert "PASS: max deviation 0 veh/h" in capsys.readouterr().out


def test_grid_empty_link(tmp_path):
    cfg = write_config(tmp_path, {"I1": np.zeros(N), "I2": np.zeros(N)})
    plan = write_plan(tmp_path, [1] * N)
    out = tmp_path / "g"
    assert main(["grid", str(cfg), "--link", "I1", "--plan", str(plan), "--nt", "5", "--nx", "4",
                 "--out", str(out)]) == 0
    grid = np.loadtxt(out / "grid_I1.csv", delimiter=",", skiprows=3)
    assert grid.shape == (20, 3) and not grid[:, 2].any()
    shock = np.loadtxt(out / "shock_I1.csv", delimiter=",", skiprows=3)
    np.testing.assert_allclose(shock[:, 1], 0.3)
    assert (out / "moskowitz_I1.png").exists()


def test_grid_blocked_link(tmp_path):
    cfg = write_config(tmp_path, {"I1": np.zeros(N), "I2": np.full(N, 1500.0)})
    plan = write_plan(tmp_path, [1] * N)  # I2 always red
    out = tmp_path / "g"
    # 9 time samples over 0.04 h put one at t = 0.02
    assert main(["grid", str(cfg), "--link", "I2", "--plan", str(plan), "--nt", "9", "--nx", "7",
                 "--out", str(out), "--no-figures"]) == 0
    shock = np.loadtxt(out / "shock_I2.csv", delimiter=",", skiprows=3)
    row = shock[np.isclose(shock[:, 0], 0.02)][0]
    assert row[1] == pytest.approx(90 / 350, abs=1e-5)


def test_grid_unknown_link_exits_2(tmp_path, small):
    cfg, plan = small
    assert main(["grid", str(cfg), "--link", "I9", "--plan", str(plan), "--out", str(tmp_path / "g")]) == 2


def test_generate_inflows_reproduces_fixture(tmp_path):
    out = tmp_path / "inflows.csv"
    assert main(["generate-inflows", str(fixture_path()), "--seed", "1", "--out", str(out)]) == 0
    bundled = fixture_path().parent / "two_junctions_inflows.csv"
    assert out.read_bytes() == bundled.read_bytes()


def test_generate_inflows_needs_links(tmp_path):
    assert main(["generate-inflows", "--seed", "1", "--out", str(tmp_path / "x.csv")]) == 1
    assert main(["generate-inflows", "--seed", "1", "--links", "A,B", "--steps", "3",
                 "--out", str(tmp_path / "x.csv")]) == 0
    assert (tmp_path / "x.csv").read_text().splitlines()[1] == "A,B"
