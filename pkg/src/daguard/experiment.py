"""Experiment orchestration: effectiveness, method comparison, and the
source-domain size / diversity / similarity sweeps.

Each (sweep point, method, seed) is an independent job that builds its own
data; results are merged in config order no matter how jobs are scheduled.
"""
from __future__ import annotations

import copy
import csv
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import jsonschema
import numpy as np

from .attack import advantage, attack
from .data import Dataset, Domain, Split, domain_diversity, domain_size, mix_all, split_dataset, subset_per_category
from .idx import load_idx
from .imaging import perturb, similarity
from .numcore import accuracy, spawn_rngs
from .synth import SynthSpec, synth_domain_family, synth_image_dataset
from .trainers import METHODS, DaJob, TrainConfig, train

log = logging.getLogger(__name__)

CONFIG_VERSION = 1
KINDS = ("q1_effectiveness", "q2_methods", "q3_size", "q3_diversity", "q3_similarity")

DEFAULT_METHODS = {
    "q1_effectiveness": ["baseline", "ddc"],
    "q2_methods": ["ddc", "drcn", "adda"],
    "q3_size": ["ddc"],
    "q3_diversity": ["ddc"],
    "q3_similarity": ["ddc"],
}


def _schema() -> dict:
    return json.loads(resources.files("daguard").joinpath("config.schema.json").read_text())


@dataclass
class ExperimentConfig:
    kind: str
    data: dict = field(default_factory=lambda: {"type": "synthetic"})
    source: str = "source"
    target: str = "target"
    methods: list[str] = field(default_factory=list)
    train: dict = field(default_factory=dict)
    method_overrides: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    seeds: list[int] = field(default_factory=lambda: [0])
    out: str = "runs"
    record_wall_time: bool = False
    version: int = CONFIG_VERSION

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if not self.methods:
            self.methods = list(DEFAULT_METHODS[self.kind])
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods: {bad}")
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        if self.kind == "q3_size" and not self.sweep.get("size_levels"):
            raise ValueError("q3_size needs sweep.size_levels")
        if self.kind == "q3_diversity" and not self.sweep.get("compositions"):
            raise ValueError("q3_diversity needs sweep.compositions")
        if self.kind == "q3_similarity" and not self.sweep.get("perturbations"):
            self.sweep = {**self.sweep, "perturbations": [{"kind": k} for k in ("brightness", "contrast", "gaussian_noise", "motion_blur")]}
        if self.kind == "q3_similarity" and self.data.get("type") == "synthetic":
            self.data = {"type": "synthetic_images"}
        # fail early on bad training parameters
        for m in self.methods:
            self.train_config(m, self.seeds[0])

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        jsonschema.validate(raw, _schema())
        raw = dict(raw)
        raw.pop("version", None)
        return cls(**raw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_dict(self) -> dict:
        return asdict(self)

    def train_config(self, method: str, seed: int) -> TrainConfig:
        params = {**self.train, **self.method_overrides.get(method, {}), "seed": seed}
        if "hidden" in params:
            params["hidden"] = tuple(params["hidden"])
        return TrainConfig(**params)


@dataclass
class RunRecord:
    method: str
    direction: str
    train_acc_target: Optional[float] = None
    test_acc_target: Optional[float] = None
    mia_acc_target: Optional[float] = None
    adv_mi_target: Optional[float] = None
    mia_acc_source: Optional[float] = None
    adv_mi_source: Optional[float] = None
    similarity: Optional[float] = None
    size: Optional[int] = None
    diversity: Optional[int] = None
    seed: int = 0
    wall_time: Optional[float] = None
    epochs: Optional[int] = None
    status: str = "ok"
    error: str = ""


RECORD_FIELDS = [f.name for f in fields(RunRecord)]


# -- data ----------------------------------------------------------------------


def build_datasets(data: dict, seed: int, names: tuple[str, ...] = ("source", "target")) -> dict[str, Dataset]:
    kind = data.get("type", "synthetic")
    if kind == "synthetic":
        shifts = data.get("shifts") or {names[0]: 0.0, names[1]: 0.3}
        spec = SynthSpec(
            n_per_class=data.get("n_per_class", 100),
            n_classes=data.get("n_classes", 4),
            dim=data.get("dim", 20),
            noise=data.get("noise", 0.1),
            seed=seed,
        )
        return synth_domain_family(spec, shifts, data.get("per_class"))
    if kind == "synthetic_images":
        per_class = data.get("per_class", {})
        return {
            names[1]: synth_image_dataset(
                names[1],
                n_classes=data.get("n_classes", 4),
                n_per_class=per_class.get(names[1], data.get("n_per_class", 50)),
                size=data.get("size", 32),
                noise=data.get("noise", 0.08),
                seed=seed,
            )
        }
    if kind == "idx":
        out = {}
        for name, paths in data.get("datasets", {}).items():
            out[name] = load_idx(paths["images"], paths["labels"], name=name)
        n_cat = max(d.n_categories for d in out.values())
        return {k: Dataset(v.name, v.features, v.labels, n_cat, v.image_shape) for k, v in out.items()}
    raise ValueError(f"unknown data type {kind!r}")


def split_all(datasets: dict[str, Dataset], data: dict, seed: int) -> dict[str, Split]:
    base = data.get("train_fraction", 0.8)
    fractions = data.get("train_fractions", {})
    rngs = spawn_rngs(seed + 104729, len(datasets))
    return {
        name: split_dataset(ds, rng, fractions.get(name, base))
        for (name, ds), rng in zip(datasets.items(), rngs)
    }


# -- jobs ------------------------------------------------------------------------


@dataclass
class Job:
    point: dict
    method: str
    seed: int


def enumerate_jobs(cfg: ExperimentConfig) -> list[Job]:
    if cfg.kind == "q3_size":
        points = [{"size_level": k} for k in cfg.sweep["size_levels"]]
    elif cfg.kind == "q3_diversity":
        points = [{"composition": list(c)} for c in cfg.sweep["compositions"]]
    elif cfg.kind == "q3_similarity":
        points = [{"perturbation": dict(p)} for p in cfg.sweep["perturbations"]]
    else:
        points = [{}]
    return [Job(p, m, s) for p in points for m in cfg.methods for s in cfg.seeds]


def _source_for(cfg: ExperimentConfig, job: Job, splits: dict[str, Split], seed: int) -> tuple[Split, Domain]:
    """Build the source split for a sweep point, plus the domain of its
    member training sets (d_1..d_n) for size and diversity."""
    if "composition" in job.point:
        names = job.point["composition"]
        missing = [n for n in names if n not in splits]
        if missing:
            raise ValueError(f"composition refers to unknown datasets {missing}")
        name = names[0] if len(names) == 1 else f"Mix({'+'.join(names)})"
        src = Split(
            mix_all([splits[n].train for n in names], name=name),
            mix_all([splits[n].non_train for n in names], name=name),
        )
        return src, Domain(tuple(splits[n].train for n in names))
    if "perturbation" in job.point:
        p = job.point["perturbation"]
        tgt = splits[cfg.target]
        noise_rng, split_rng = spawn_rngs(seed + 15485863, 2)
        full = mix_all([tgt.train, tgt.non_train])
        crafted = perturb(full, p["kind"], p.get("severity"), noise_rng)
        crafted = Dataset(p["kind"], crafted.features, crafted.labels, crafted.n_categories, crafted.image_shape)
        src = split_dataset(crafted, split_rng, tgt.train_fraction)
        return src, Domain((src.train,))
    src = splits[cfg.source]
    if "size_level" in job.point:
        (rng,) = spawn_rngs(seed + 32452843, 1)
        src = Split(subset_per_category(src.train, job.point["size_level"], rng), src.non_train, src.train_fraction)
    return src, Domain((src.train,))


def run_job(cfg: ExperimentConfig, job: Job) -> RunRecord:
    start = time.perf_counter()
    rec = RunRecord(method=job.method, direction="", seed=job.seed)
    try:
        tc = cfg.train_config(job.method, job.seed)
        rec.epochs = tc.epochs
        names = (cfg.source, cfg.target)
        splits = split_all(build_datasets(cfg.data, job.seed, names), cfg.data, job.seed)
        if cfg.target not in splits:
            raise ValueError(f"target dataset {cfg.target!r} not found")
        target = splits[cfg.target]
        source, source_domain = _source_for(cfg, job, splits, job.seed)
        rec.direction = f"{target.name}" if job.method == "baseline" else f"{source.name}->{target.name}"
        artifact = train(DaJob(source, target, job.method, tc))
        model = artifact.model

        rec.train_acc_target = accuracy(model, target.train.features, target.train.labels)
        rec.test_acc_target = accuracy(model, target.non_train.features, target.non_train.labels)
        rep = attack(model, target.train, target.non_train)
        rec.mia_acc_target, rec.adv_mi_target = rep.p_inference, rep.adv_mi
        if job.method != "baseline":
            rep_s = attack(model, source.train, source.non_train)
            rec.mia_acc_source, rec.adv_mi_source = rep_s.p_inference, rep_s.adv_mi
            rec.size = domain_size(source_domain)
            rec.diversity = domain_diversity(source_domain)
            if source.train.image_shape is not None and target.train.image_shape is not None:
                rec.similarity = similarity(Domain((source.train,)), Domain((target.train,)))
    except Exception as exc:  # a failed sub-run is recorded, the sweep goes on
        log.warning("job %s/%s/seed=%d failed: %s", job.point, job.method, job.seed, exc)
        rec.status, rec.error = "failed", f"{type(exc).__name__}: {exc}"
    if cfg.record_wall_time:
        rec.wall_time = time.perf_counter() - start
    return rec


def worker_count() -> int:
    raw = os.environ.get("DAMIA_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        log.warning("ignoring non-integer DAMIA_THREADS=%r", raw)
        return 1


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> list[RunRecord]:
    jobs = enumerate_jobs(cfg)
    log.info("%s: %d jobs", cfg.kind, len(jobs))
    workers = min(worker_count(), len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            records = list(pool.map(lambda j: run_job(cfg, j), jobs))
    else:
        records = [run_job(cfg, j) for j in jobs]
    out = Path(out_dir or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_records_csv(out / "records.csv", records)
    with open(out / "config.json", "w") as f:
        json.dump(cfg.to_dict(), f, indent=2, sort_keys=True)
    return records


# -- records I/O -----------------------------------------------------------------


def _cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_records_csv(path, records: list[RunRecord]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(RECORD_FIELDS)
        for r in records:
            w.writerow([_cell(getattr(r, name)) for name in RECORD_FIELDS])


_INT_FIELDS = {"size", "diversity", "seed", "epochs"}
_STR_FIELDS = {"method", "direction", "status", "error"}


def read_records_csv(path) -> list[RunRecord]:
    out = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            kw = {}
            for name in RECORD_FIELDS:
                raw = row.get(name, "")
                if name in _STR_FIELDS:
                    kw[name] = raw
                elif raw == "":
                    kw[name] = None
                elif name in _INT_FIELDS:
                    kw[name] = int(raw)
                else:
                    kw[name] = float(raw)
            out.append(RunRecord(**kw))
    return out


SUMMARY_COLUMNS = [
    "train_acc_target",
    "test_acc_target",
    "mia_acc_target",
    "adv_mi_target",
    "mia_acc_source",
    "adv_mi_source",
    "similarity",
]


def summarize(records: list[RunRecord]) -> list[dict]:
    """Mean of each metric over seeds, per (method, direction, size, diversity)."""
    groups: dict[tuple, list[RunRecord]] = {}
    for r in records:
        if r.status != "ok":
            continue
        groups.setdefault((r.method, r.direction, r.size, r.diversity), []).append(r)
    rows = []
    for (method, direction, size, diversity), rs in groups.items():
        row = {"method": method, "direction": direction, "size": size, "diversity": diversity, "n_seeds": len(rs)}
        for col in SUMMARY_COLUMNS:
            vals = [getattr(r, col) for r in rs if getattr(r, col) is not None]
            row[col] = float(np.mean(vals)) if vals else None
        rows.append(row)
    return rows


def format_summary(rows: list[dict]) -> str:
    header = ["method", "direction", "size", "diversity", "n_seeds"] + SUMMARY_COLUMNS
    table = [header]
    for row in rows:
        table.append([
            f"{row[h]:.4f}" if isinstance(row[h], float) else ("" if row[h] is None else str(row[h]))
            for h in header
        ])
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in table)


def write_summary_csv(path, rows: list[dict]) -> None:
    header = ["method", "direction", "size", "diversity", "n_seeds"] + SUMMARY_COLUMNS
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(row[h]) for h in header])


def check_record(rec: RunRecord, tol: float = 1e-12) -> bool:
    """adv columns agree with their accuracies."""
    pairs = [(rec.mia_acc_target, rec.adv_mi_target), (rec.mia_acc_source, rec.adv_mi_source)]
    return all(a is None or abs(advantage(a) - v) <= tol for a, v in pairs)


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    new = copy.deepcopy(cfg)
    for k, v in kw.items():
        setattr(new, k, v)
    new.__post_init__()
    return new
