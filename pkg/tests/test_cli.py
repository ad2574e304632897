import json
from importlib.resources import files
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from viewsieve.cli import main
from viewsieve.model import Trajectory, CameraView, save_trajectory, synthetic_trajectory, save_features

FIXTURES = Path(__file__).parent / "fixtures"
SCHEMA = json.loads(files("viewsieve").joinpath("schemas/selection.schema.json").read_text())


@pytest.fixture
def poses(tmp_path):
    traj = synthetic_trajectory(120, 3, feature_dim=8)
    save_trajectory(traj, tmp_path / "poses.json")
    save_features({v.id: v.feature for v in traj.views}, tmp_path / "feats.json")
    return tmp_path / "poses.json", tmp_path / "feats.json"


def run_select(tmp_path, *extra, name="sel.json"):
    out = tmp_path / name
    code = main(["select", *extra, "--out", str(out)])
    return code, (json.loads(out.read_text()) if out.exists() else None)


def strip_volatile(doc):
    doc = json.loads(json.dumps(doc))
    doc["manifest"].pop("started_at")
    doc["manifest"].pop("duration_s")
    doc["manifest"].pop("command")
    doc["manifest"].pop("outputs")
    return doc


@pytest.mark.parametrize("strategy", ["random", "uniform", "greedy-df", "greedy-dpp", "greedy-cf"])
def test_select_every_strategy(tmp_path, poses, strategy):
    p, f = poses
    code, doc = run_select(tmp_path, "--poses", str(p), "--features", str(f), "--strategy", strategy,
                           "--ratio", "0.1", "--seed", "42", "--grid-res", "6")
    assert code == 0
    jsonschema.validate(doc, SCHEMA)
    assert doc["k"] == 12 and doc["n"] == 120 and len(doc["indices"]) == 12
    assert len(set(doc["indices"])) == 12
    if strategy.startswith("greedy"):
        # pick order, one gain per pick
        assert len(doc["gains"]) == 12
    else:
        assert doc["indices"] == sorted(doc["indices"])
    assert doc["manifest"]["inputs"][str(p)]


def test_select_is_byte_deterministic(tmp_path, poses):
    p, f = poses
    args = ["--poses", str(p), "--features", str(f), "--strategy", "greedy-df", "--count", "9", "--seed", "5"]
    _, a = run_select(tmp_path, *args, name="a.json")
    _, b = run_select(tmp_path, *args, name="b.json")
    assert json.dumps(strip_volatile(a)) == json.dumps(strip_volatile(b))


def test_select_stdout_json(poses, capsys):
    p, _ = poses
    assert main(["select", "--poses", str(p), "--strategy", "uniform", "--count", "4"]) == 0
    captured = capsys.readouterr()
    assert json.loads(captured.out)["indices"]
    assert "selected 4 of 120" in captured.err


def test_select_without_features_rescales(tmp_path, poses):
    p, _ = poses
    code, doc = run_select(tmp_path, "--poses", str(p), "--strategy", "greedy-df", "--count", "3")
    assert code == 0
    w = doc["params"]["weights"]
    assert w["gamma"] == 0.0
    assert w["alpha"] == pytest.approx(7 / 9) and w["beta"] == pytest.approx(2 / 9)


def test_select_csv_and_plot(tmp_path, poses):
    p, f = poses
    code, doc = run_select(tmp_path, "--poses", str(p), "--features", str(f), "--strategy", "greedy-df",
                           "--count", "5", "--csv", str(tmp_path / "s.csv"), "--plot", str(tmp_path / "s.png"))
    assert code == 0
    rows = (tmp_path / "s.csv").read_text().splitlines()
    assert rows[0] == "rank,index,gain" and len(rows) == 6
    assert (tmp_path / "s.png").read_bytes()[:4] == b"\x89PNG"


def test_usage_errors(tmp_path, poses, capsys):
    p, f = poses
    base = ["select", "--poses", str(p), "--strategy", "greedy-df"]
    assert main(base) == 2  # neither --count nor --ratio
    assert main(base + ["--count", "3", "--ratio", "0.1"]) == 2
    assert main(base + ["--count", "0"]) == 2
    assert main(base + ["--count", "500"]) == 2
    assert main(base + ["--count", "3", "--gamma", "0.2"]) == 2
    assert main(base + ["--count", "3", "--alpha", "0.9", "--beta", "0.9"]) == 2
    assert main(base + ["--count", "3", "--seed", "-1"]) == 2
    assert "needs --features" in capsys.readouterr().err


def test_ingest_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["select", "--poses", str(bad), "--strategy", "uniform", "--count", "1"]) == 3
    assert main(["select", "--poses", str(tmp_path / "missing.json"), "--strategy", "uniform", "--count", "1"]) == 3
    rows = tmp_path / "p.csv"
    rows.write_text("id,x,y,z\n0,1,2,3\n")
    assert main(["matrix", "--poses", str(rows)]) == 3


def test_singular_exit(tmp_path, capsys):
    code = main(["select", "--poses", str(FIXTURES / "dpp_duplicates.json"), "--strategy", "greedy-dpp",
                 "--count", "5", "--out", str(tmp_path / "x.json")])
    assert code == 4
    assert "step 3" in capsys.readouterr().err
    assert not (tmp_path / "x.json").exists()


def test_matrix_single_and_identical(tmp_path, capsys):
    one = tmp_path / "one.json"
    save_trajectory(Trajectory((CameraView(0, (0, 0, 0), np.eye(3)),)), one)
    assert main(["matrix", "--poses", str(one)]) == 0
    assert capsys.readouterr().out == "1\n"
    two = tmp_path / "two.json"
    save_trajectory(Trajectory((CameraView(0, (1, 1, 1), np.eye(3)), CameraView(1, (1, 1, 1), np.eye(3)))), two)
    assert main(["matrix", "--poses", str(two), "--out", str(tmp_path / "m.csv")]) == 0
    m = np.loadtxt(tmp_path / "m.csv", delimiter=",")
    np.testing.assert_allclose(m, np.ones((2, 2)), rtol=0, atol=1e-15)
    assert main(["matrix", "--poses", str(two), "--gamma", "0.1"]) == 2


def test_matrix_plot(tmp_path, poses):
    p, f = poses
    assert main(["matrix", "--poses", str(p), "--features", str(f), "--out", str(tmp_path / "m.csv"),
                 "--plot", str(tmp_path / "m.svg")]) == 0
    m = np.loadtxt(tmp_path / "m.csv", delimiter=",")
    assert m.shape == (120, 120) and np.allclose(m, m.T)
    assert (tmp_path / "m.svg").stat().st_size > 0


def test_check_suites(tmp_path):
    out = tmp_path / "r.json"
    assert main(["check", "--suite", "approx", "--trials", "10", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["details"]["passed"] is True
    assert main(["check", "--suite", "submodular", "--utility", "df", "--trials", "200", "--out", str(out)]) == 0
    assert main(["check", "--suite", "monotone", "--utility", "dpp", "--trials", "100", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["violation_count"] > 0


def test_check_cf_writes_fixture(tmp_path):
    fx = tmp_path / "w.json"
    assert main(["check", "--suite", "submodular", "--utility", "cf", "--trials", "300", "--seed", "7",
                 "--out", str(tmp_path / "r.json"), "--fixture", str(fx)]) == 0
    w = json.loads(fx.read_text())
    assert w["gain_B"] > w["gain_A"]


def test_check_property_failure_exit(tmp_path):
    # so few trials that the search cannot find a witness
    assert main(["check", "--suite", "submodular", "--utility", "cf", "--trials", "1", "--seed", "0",
                 "--out", str(tmp_path / "r.json")]) in (0, 5)
    codes = {main(["check", "--suite", "submodular", "--utility", "cf", "--trials", "1", "--seed", str(s),
                   "--out", str(tmp_path / "r.json")]) for s in range(5)}
    assert 5 in codes


def test_synth_roundtrip(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["synth", "--frames", "30", "--seed", "1", "--out", str(out),
                 "--features", str(tmp_path / "f.bin"), "--dim", "4"]) == 0
    assert main(["select", "--poses", str(out), "--features", str(tmp_path / "f.bin"),
                 "--strategy", "greedy-dpp", "--count", "5", "--out", str(tmp_path / "s.json")]) == 0


def test_thread_env(tmp_path, poses, monkeypatch):
    p, _ = poses
    monkeypatch.setenv("VIEWSIEVE_THREADS", "1")
    assert main(["select", "--poses", str(p), "--strategy", "random", "--count", "2",
                 "--out", str(tmp_path / "s.json")]) == 0
    monkeypatch.setenv("VIEWSIEVE_THREADS", "many")
    assert main(["select", "--poses", str(p), "--strategy", "random", "--count", "2"]) == 2
