import json
import subprocess
import sys

import pytest

from daguard.cli import main
from daguard.idx import load_idx, save_idx
from daguard.synth import synth_image_dataset


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({
        "version": 1,
        "kind": "q1_effectiveness",
        "data": {"type": "synthetic", "n_per_class": 15, "n_classes": 3, "dim": 6},
        "train": {"epochs": 5, "hidden": [8]},
        "seeds": [0],
    }))
    return path


def _lines(capsys):
    return capsys.readouterr().out.strip().splitlines()


def test_attack_on_score_file(tmp_path, capsys):
    scores = tmp_path / "s.csv"
    scores.write_text("score,is_member\n0.9,1\n0.8,1\n0.7,1\n0.6,0\n0.4,0\n")
    assert main(["attack", "--scores", str(scores)]) == 0
    out = _lines(capsys)
    assert out[:3] == ["p_thresh=0.700000", "p_inference=1.000000", "adv_mi=1.000000"]


def test_train_attack_metrics_round_trip(tmp_path, config, capsys):
    model = tmp_path / "m.bin"
    assert main(["train", "--config", str(config), "--method", "ddc", "--out", str(model)]) == 0
    assert model.exists()
    capsys.readouterr()
    exported = tmp_path / "exp.csv"
    assert main(["attack", "--config", str(config), "--model", str(model), "--export-scores", str(exported)]) == 0
    first = _lines(capsys)
    assert main(["attack", "--scores", str(exported)]) == 0
    assert _lines(capsys) == first
    assert main(["attack", "--config", str(config), "--model", str(model), "--side", "source"]) == 0
    capsys.readouterr()
    assert main(["metrics", "--config", str(config), "--model", str(model), "--out", str(tmp_path / "met")]) == 0
    for name in ("gen_errors.csv", "pred_dist.csv", "embedding.csv"):
        assert (tmp_path / "met" / name).exists()


def test_perturb_and_similarity(tmp_path, capsys):
    ds = synth_image_dataset(n_per_class=5, size=32, seed=3)
    save_idx(ds, tmp_path / "a-images.idx3-ubyte", tmp_path / "a-labels.idx1-ubyte")
    assert main([
        "perturb", "--images", str(tmp_path / "a-images.idx3-ubyte"), "--labels", str(tmp_path / "a-labels.idx1-ubyte"),
        "--kind", "brightness", "--out", str(tmp_path / "out" / "b"),
    ]) == 0
    out = load_idx(tmp_path / "out" / "b-images.idx3-ubyte", tmp_path / "out" / "b-labels.idx1-ubyte")
    assert len(out) == len(ds)
    capsys.readouterr()
    assert main(["similarity", "--a", str(tmp_path / "a-images.idx3-ubyte"), "--b", str(tmp_path / "a-images.idx3-ubyte")]) == 0
    assert _lines(capsys) == ["1.000000"]
    assert main(["similarity", "--a", str(tmp_path / "a-images.idx3-ubyte"), "--b", str(tmp_path / "out")]) == 0
    (line,) = _lines(capsys)
    assert len(line.split(".")[1]) == 6
    assert 0.0 <= float(line) <= 1.0


def test_experiment_and_report(tmp_path, config, capsys):
    out = tmp_path / "run"
    assert main(["experiment", "--config", str(config), "--out", str(out), "--seed", "3"]) == 0
    assert "2 records (0 failed)" in capsys.readouterr().out
    assert main(["report", "--records", str(out / "records.csv"), "--out", str(tmp_path / "summary.csv")]) == 0
    table = _lines(capsys)
    assert table[0].startswith("method")
    assert len(table) == 3
    assert (tmp_path / "summary.csv").exists()


def test_errors_exit_one(tmp_path, capsys):
    assert main(["attack", "--scores", str(tmp_path / "missing.csv")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"version": 1, "kind": "q9"}))
    assert main(["experiment", "--config", str(bad)]) == 1
    assert "error" in capsys.readouterr().err


def test_usage_errors_exit_two():
    proc = subprocess.run([sys.executable, "-m", "daguard", "frobnicate"], capture_output=True, text=True)
    assert proc.returncode == 2
    assert "usage" in proc.stderr
