import csv

import jsonschema
import pytest

from daguard.attack import advantage
from daguard.experiment import (
    RECORD_FIELDS,
    ExperimentConfig,
    RunRecord,
    check_record,
    enumerate_jobs,
    read_records_csv,
    run_experiment,
    summarize,
    write_records_csv,
)

FAST_TRAIN = {"epochs": 5, "hidden": [8], "batch_size": 16}
SMALL_DATA = {"type": "synthetic", "n_per_class": 15, "n_classes": 3, "dim": 6}


def _cfg(kind="q1_effectiveness", **kw):
    raw = {"version": 1, "kind": kind, "data": SMALL_DATA, "train": FAST_TRAIN, "seeds": [0, 1]}
    raw.update(kw)
    return ExperimentConfig.from_dict(raw)


def test_q1_records_header_and_rows(tmp_path):
    recs = run_experiment(_cfg(), tmp_path)
    with open(tmp_path / "records.csv", newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == RECORD_FIELDS
    assert rows[0][:11] == [
        "method", "direction", "train_acc_target", "test_acc_target", "mia_acc_target", "adv_mi_target",
        "mia_acc_source", "adv_mi_source", "similarity", "size", "diversity",
    ]
    assert len(rows) == 1 + 2 * 2
    assert [r.method for r in recs] == ["baseline", "baseline", "ddc", "ddc"]
    assert all(r.status == "ok" for r in recs)
    assert (tmp_path / "config.json").exists()


def test_every_record_has_consistent_advantage(tmp_path):
    recs = run_experiment(_cfg(methods=["baseline", "ddc", "drcn", "adda"]), tmp_path)
    for r in recs:
        assert check_record(r)
        assert abs(advantage(r.mia_acc_target) - r.adv_mi_target) <= 1e-12
        for v in (r.train_acc_target, r.test_acc_target, r.mia_acc_target):
            assert 0.0 <= v <= 1.0
    assert all(r.mia_acc_source is None for r in recs if r.method == "baseline")
    assert all(r.size is not None for r in recs if r.method != "baseline")


def test_reruns_are_byte_identical(tmp_path):
    cfg = _cfg()
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    assert (tmp_path / "a" / "records.csv").read_bytes() == (tmp_path / "b" / "records.csv").read_bytes()


def test_threads_do_not_change_results(tmp_path, monkeypatch):
    cfg = _cfg()
    run_experiment(cfg, tmp_path / "serial")
    monkeypatch.setenv("DAMIA_THREADS", "3")
    run_experiment(cfg, tmp_path / "threaded")
    assert (tmp_path / "serial" / "records.csv").read_bytes() == (tmp_path / "threaded" / "records.csv").read_bytes()


def test_size_ladder(tmp_path):
    cfg = _cfg("q3_size", sweep={"size_levels": [1, 3, 100]}, seeds=[0])
    recs = run_experiment(cfg, tmp_path)
    assert len(recs) == 3
    # 3 categories, 15 per class at 80% train -> 12 per class available
    assert [r.size for r in recs] == [3, 9, 36]


def test_diversity_compositions(tmp_path):
    data = {**SMALL_DATA, "shifts": {"a": 0.0, "b": 0.2, "c": 0.4, "target": 0.3}}
    cfg = _cfg("q3_diversity", data=data, sweep={"compositions": [["a"], ["a", "b"], ["a", "b", "c"]]}, seeds=[0])
    recs = run_experiment(cfg, tmp_path)
    assert [r.diversity for r in recs] == [1, 2, 3]
    assert [r.size for r in recs] == [36, 72, 108]
    assert recs[1].direction == "Mix(a+b)->target"


def test_similarity_sweep_records_similarity(tmp_path):
    cfg = _cfg("q3_similarity", data={"type": "synthetic_images", "n_per_class": 10, "n_classes": 2}, seeds=[0])
    recs = run_experiment(cfg, tmp_path)
    assert len(recs) == 4
    for r in recs:
        assert r.status == "ok"
        assert (1 - r.similarity) * 64 == round((1 - r.similarity) * 64)


def test_failed_job_is_recorded_not_raised(tmp_path):
    cfg = _cfg("q3_diversity", sweep={"compositions": [["nowhere"]]}, seeds=[0])
    (rec,) = run_experiment(cfg, tmp_path)
    assert rec.status == "failed"
    assert "nowhere" in rec.error


def test_jobs_enumerate_point_method_seed():
    jobs = enumerate_jobs(_cfg("q3_size", sweep={"size_levels": [1, 2]}, methods=["ddc", "drcn"]))
    assert [(j.point["size_level"], j.method, j.seed) for j in jobs][:3] == [(1, "ddc", 0), (1, "ddc", 1), (1, "drcn", 0)]
    assert len(jobs) == 8


def test_config_validation():
    with pytest.raises(jsonschema.ValidationError):
        ExperimentConfig.from_dict({"version": 2, "kind": "q1_effectiveness"})
    with pytest.raises(jsonschema.ValidationError):
        ExperimentConfig.from_dict({"version": 1, "kind": "q1_effectiveness", "methods": ["dann"]})
    with pytest.raises(jsonschema.ValidationError):
        ExperimentConfig.from_dict({"version": 1, "kind": "q1_effectiveness", "seeds": []})
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"version": 1, "kind": "q3_size"})
    with pytest.raises(TypeError):
        ExperimentConfig.from_dict({"version": 1, "kind": "q1_effectiveness", "train": {"momentum": 0.9}})


def test_method_overrides_apply_per_method():
    cfg = _cfg(method_overrides={"baseline": {"epochs": 50}})
    assert cfg.train_config("baseline", 0).epochs == 50
    assert cfg.train_config("ddc", 0).epochs == 5


def test_records_round_trip_and_summary(tmp_path):
    recs = [
        RunRecord("ddc", "s->t", 1.0, 0.5, 0.6, 0.2, 0.55, 0.1, None, 40, 1, 0, None, 5),
        RunRecord("ddc", "s->t", 0.5, 0.25, 0.7, 0.4, 0.65, 0.3, None, 40, 1, 1, None, 5),
        RunRecord("ddc", "s->t", status="failed", error="boom", seed=2),
    ]
    write_records_csv(tmp_path / "r.csv", recs)
    back = read_records_csv(tmp_path / "r.csv")
    assert back == recs
    (row,) = summarize(back)
    assert row["n_seeds"] == 2
    assert row["adv_mi_target"] == pytest.approx(0.3)
