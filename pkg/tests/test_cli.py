import csv
import json
import os
import subprocess
import sys

import pytest
from scipy.stats import binom

from bridgealign.cli import main
from bridgealign.config import RunConfig


def run(*argv):
    return main([str(a) for a in argv])


def read_metrics(path):
    with open(path) as fh:
        return {row["metric"]: float(row["value"]) for row in csv.DictReader(fh)}


def write_config(path, data):
    path.write_text(json.dumps(data))
    return path


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert run("simulate", "--out", out) == 0
    return out


@pytest.fixture(scope="module")
def trained_dir(sim_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert run("train", "--data", sim_dir, "--out", out) == 0
    return out


def test_simulate_is_byte_identical(sim_dir, tmp_path):
    assert run("simulate", "--seed", 7, "--out", tmp_path) == 0
    for name in ("bank.bin", "videos.bin", "videos.json"):
        assert (tmp_path / name).read_bytes() == (sim_dir / name).read_bytes(), name


def test_train_is_idempotent(sim_dir, trained_dir, tmp_path):
    assert run("train", "--data", sim_dir, "--out", tmp_path) == 0
    for name in ("projector.bin", "history.csv"):
        assert (tmp_path / name).read_bytes() == (trained_dir / name).read_bytes(), name
    header = (trained_dir / "history.csv").read_text().splitlines()[0]
    assert header == "epoch,total,htm,bc,btc"


def test_gradcheck_vacuous(tmp_path, capsys):
    assert run("gradcheck", "--trials", 0, "--out", tmp_path / "g.json") == 0
    report = json.loads((tmp_path / "g.json").read_text())
    assert report["max_relative_error"] == {} and report["passed"]


def test_gradcheck_small(capsys):
    assert run("gradcheck", "--trials", 5) == 0
    report = json.loads(capsys.readouterr().out)
    assert set(report["max_relative_error"]) == {"htm", "bc", "btc", "bta", "projector_linear", "projector_mlp"}


def test_gradcheck_corrupted_gradient_fails():
    assert run("gradcheck", "--trials", 3, "--corrupt-gradient") == 2


def test_schema_violation_fails_fast(tmp_path, sim_dir):
    cfg = write_config(tmp_path / "bad.json", {"train": {"learning_rat": 0.1}})
    out = tmp_path / "never"
    assert run("simulate", "--config", cfg, "--out", out) == 1
    assert not out.exists()
    assert run("train", "--config", cfg, "--data", sim_dir, "--out", out) == 1
    assert not out.exists()


def test_missing_inputs_are_io_failures(tmp_path):
    assert run("train", "--data", tmp_path / "nowhere", "--out", tmp_path / "o") == 3
    assert run("eval", "--data", tmp_path / "nowhere") == 3
    assert run("simulate", "--config", tmp_path / "missing.json") == 3
    (tmp_path / "junk").mkdir()
    for name in ("bank.bin", "videos.bin"):
        (tmp_path / "junk" / name).write_bytes(b"not a tensor file")
    (tmp_path / "junk" / "videos.json").write_text("{}")
    assert run("eval", "--data", tmp_path / "junk", "--out", tmp_path / "m.csv") == 3


def test_divergent_training_is_numerical_failure(sim_dir, tmp_path):
    cfg = write_config(tmp_path / "c.json", {"train": {"optimizer": "sgd", "learning_rate": 1e300, "epochs": 2}})
    with pytest.warns(RuntimeWarning):
        code = run("train", "--config", cfg, "--data", sim_dir, "--out", tmp_path / "o")
    assert code == 2


def test_eval_untrained_is_near_chance(sim_dir, tmp_path):
    out = tmp_path / "untrained.csv"
    assert run("eval", "--data", sim_dir, "--out", out) == 0
    m = read_metrics(out)
    n = int(m["test_instances"])
    C = RunConfig().sim.C
    lo, hi = binom.interval(0.99, n, 1.0 / C)
    for key in ("bridge_center_accuracy", "frame_ensemble_accuracy"):
        assert lo / n <= m[key] <= hi / n, (key, m[key], lo / n, hi / n)


def test_eval_trained(sim_dir, trained_dir, tmp_path):
    out = tmp_path / "metrics.csv"
    assert run("eval", "--data", sim_dir, "--projector", trained_dir / "projector.bin", "--out", out,
               "--config-id", "trained") == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert {r["config_id"] for r in rows} == {"trained"}
    m = read_metrics(out)
    expected = {"bridge_center_accuracy", "frame_ensemble_accuracy", "bridge_center_entropy",
                "frame_ensemble_entropy", "bridge_deviation_raw", "bridge_deviation_projected",
                "association_accuracy_noise_0", "association_accuracy_noise_0.01",
                "association_accuracy_noise_0.05"}
    assert expected <= set(m)
    assert m["bridge_center_accuracy"] > m["frame_ensemble_accuracy"]
    assert m["bridge_center_entropy"] < m["frame_ensemble_entropy"]
    assert m["association_accuracy_noise_0"] == 1.0


def test_track_demo(tmp_path, capsys):
    out = tmp_path / "tracks.json"
    assert run("track-demo", "--out", out, "--window", 3) == 0
    tracks = json.loads(out.read_text())
    assert len(tracks) == RunConfig().sim.instances_per_video
    assert all(len(v) == RunConfig().sim.T for v in tracks.values())
    assert "association accuracy 1.0000" in capsys.readouterr().out


def test_sweep_row_count(tmp_path):
    cfg = write_config(tmp_path / "c.json", {
        "sim": {"instances_per_category": 8},
        "sweep": {"deltas": [0.3, 0.7], "frame_counts": [3, 5], "epochs": 2},
    })
    out = tmp_path / "sweep.csv"
    assert run("sweep", "--config", cfg, "--out", out) == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    assert [(float(r["delta"]), int(r["T"])) for r in rows] == [(0.3, 3), (0.7, 3), (0.3, 5), (0.7, 5)]
    assert [int(r["seed"]) for r in rows] == [7 ^ i for i in range(4)]
    trend = json.loads((tmp_path / "sweep.trend.json").read_text())
    assert set(trend["best_delta_per_T"]) == {"3", "5"}


def test_sweep_threads_match_serial(tmp_path):
    cfg = write_config(tmp_path / "c.json", {
        "sim": {"instances_per_category": 6},
        "sweep": {"deltas": [0.1, 0.9], "frame_counts": [3], "epochs": 2},
    })
    assert run("sweep", "--config", cfg, "--out", tmp_path / "a.csv") == 0
    assert run("sweep", "--config", cfg, "--out", tmp_path / "b.csv", "--threads", 2) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_single_cell_sweep_equals_train_then_eval(tmp_path):
    base = {"sim": {"T": 5, "instances_per_category": 10}, "train": {"delta": 0.5, "epochs": 5},
            "sweep": {"deltas": [0.5], "frame_counts": [5]}}
    cfg = write_config(tmp_path / "c.json", base)
    assert run("sweep", "--config", cfg, "--out", tmp_path / "sweep.csv") == 0
    with open(tmp_path / "sweep.csv") as fh:
        (cell,) = list(csv.DictReader(fh))

    assert run("simulate", "--config", cfg, "--out", tmp_path / "data") == 0
    assert run("train", "--config", cfg, "--data", tmp_path / "data", "--out", tmp_path / "run") == 0
    assert run("eval", "--config", cfg, "--data", tmp_path / "data", "--projector", tmp_path / "run" / "projector.bin",
               "--out", tmp_path / "m.csv") == 0
    m = read_metrics(tmp_path / "m.csv")
    for key in ("bridge_center_accuracy", "frame_ensemble_accuracy", "bridge_center_entropy",
                "frame_ensemble_entropy"):
        assert float(cell[key]) == m[key], key
    history = (tmp_path / "run" / "history.csv").read_text().splitlines()
    assert float(cell["final_loss"]) == float(history[-1].split(",")[1])


@pytest.mark.parametrize("level,shown", [("info", True), ("error", False)])
def test_log_level_env(sim_dir, tmp_path, level, shown):
    # logging is configured once per process, so run the CLI in a fresh interpreter
    env = {**os.environ, "BRIDGEALIGN_LOG": level}
    proc = subprocess.run([sys.executable, "-m", "bridgealign.cli", "eval", "--data", str(sim_dir),
                           "--out", str(tmp_path / "m.csv")], env=env, capture_output=True, text=True)
    assert proc.returncode == 0
    assert ("untrained initial projector" in proc.stderr) == shown
