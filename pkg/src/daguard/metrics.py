"""Diagnostics that explain why a model does or does not leak membership:
per-class generalization gaps, member/non-member confidence histograms, and
2-D projections of the intermediate representation."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import Dataset, Split
from .numcore import MlpModel, forward

N_BINS = 20


@dataclass(frozen=True)
class ClassGenError:
    category: int
    train_acc: float
    test_acc: float

    @property
    def gen_error(self) -> float:
        return self.train_acc - self.test_acc

    @property
    def defined(self) -> bool:
        return not (np.isnan(self.train_acc) or np.isnan(self.test_acc))


@dataclass(frozen=True)
class GenErrorReport:
    per_class: list[ClassGenError]
    cdf_x: np.ndarray
    cdf_y: np.ndarray
    n_undefined: int

    @property
    def mean_gen_error(self) -> float:
        vals = [c.gen_error for c in self.per_class if c.defined]
        return float(np.mean(vals)) if vals else float("nan")


def _per_class_accuracy(model: MlpModel, ds: Dataset) -> np.ndarray:
    pred = forward(model, ds.features).probs.argmax(axis=1) if len(ds) else np.zeros(0, dtype=int)
    out = np.full(ds.n_categories, np.nan)
    for c in range(ds.n_categories):
        mask = ds.labels == c
        if mask.any():
            out[c] = float((pred[mask] == c).mean())
    return out


def generalization_errors(model: MlpModel, split: Split) -> GenErrorReport:
    """Train minus non-train accuracy per category, with the empirical CDF of
    the gaps. Categories missing from either partition are left out of the CDF."""
    if split.train.labels is None or split.non_train.labels is None:
        raise ValueError("generalization errors need a labeled split")
    tr = _per_class_accuracy(model, split.train)
    te = _per_class_accuracy(model, split.non_train)
    per_class = [ClassGenError(c, float(tr[c]), float(te[c])) for c in range(split.n_categories)]
    gaps = np.sort([c.gen_error for c in per_class if c.defined])
    ys = np.arange(1, len(gaps) + 1) / len(gaps) if len(gaps) else np.zeros(0)
    return GenErrorReport(per_class, gaps, ys, sum(not c.defined for c in per_class))


@dataclass(frozen=True)
class PredDistribution:
    category: int
    member_hist: np.ndarray
    nonmember_hist: np.ndarray

    @property
    def l1_distance(self) -> float:
        return float(np.abs(self.member_hist - self.nonmember_hist).sum())


def confidence_histogram(scores: np.ndarray, n_bins: int = N_BINS) -> np.ndarray:
    """Normalised mass per bin over [0, 1]; all zeros for an empty input."""
    counts, _ = np.histogram(scores, bins=n_bins, range=(0.0, 1.0))
    total = counts.sum()
    return counts / total if total else counts.astype(np.float64)


def prediction_distributions(model: MlpModel, split: Split, categories: Optional[Sequence[int]] = None) -> list[PredDistribution]:
    """Top-confidence histograms for members vs non-members of each category (by true label)."""
    if split.train.labels is None or split.non_train.labels is None:
        raise ValueError("prediction distributions need a labeled split")
    n_cat = split.n_categories
    categories = list(range(n_cat)) if categories is None else [int(c) for c in categories]
    for c in categories:
        if not 0 <= c < n_cat:
            raise ValueError(f"unknown category {c}")
    conf_tr = forward(model, split.train.features).probs.max(axis=1)
    conf_te = forward(model, split.non_train.features).probs.max(axis=1)
    return [
        PredDistribution(
            c,
            confidence_histogram(conf_tr[split.train.labels == c]),
            confidence_histogram(conf_te[split.non_train.labels == c]),
        )
        for c in categories
    ]


@dataclass(frozen=True)
class Embedding2D:
    points: np.ndarray
    labels: np.ndarray
    membership: np.ndarray


def pca2(x: np.ndarray) -> np.ndarray:
    """Project centred rows onto the two leading principal directions.

    Each direction's sign is fixed so its largest-magnitude coordinate is positive.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or len(x) < 3:
        raise ValueError("need at least 3 samples")
    if x.shape[1] < 2:
        raise ValueError("need at least 2 feature dimensions")
    xc = x - x.mean(axis=0)
    _, vecs = np.linalg.eigh(xc.T @ xc / len(x))
    top = vecs[:, ::-1][:, :2].copy()
    for k in range(2):
        pivot = int(np.argmax(np.abs(top[:, k])))
        if top[pivot, k] < 0:
            top[:, k] = -top[:, k]
    return xc @ top


def embed2d(
    model: MlpModel,
    datasets: Sequence[Dataset],
    feature_layer: Optional[int] = None,
    membership: Optional[Sequence[bool]] = None,
) -> Embedding2D:
    """Deterministic 2-D view of feature-layer activations for several datasets.

    ``membership[i]`` flags whether ``datasets[i]`` was trained on.
    """
    layer = model.feature_layer if feature_layer is None else feature_layer
    if not 0 <= layer < model.n_hidden:
        raise ValueError(f"feature_layer {layer} out of range")
    membership = [False] * len(datasets) if membership is None else list(membership)
    feats = np.vstack([model.features(d.features, layer) for d in datasets])
    labels = np.concatenate([d.labels if getattr(d, "labels", None) is not None else np.full(len(d), -1) for d in datasets])
    flags = np.concatenate([np.full(len(d), bool(m)) for d, m in zip(datasets, membership)])
    return Embedding2D(pca2(feats), labels.astype(np.int64), flags)


def write_gen_errors_csv(path, report: GenErrorReport) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["category", "train_acc", "test_acc", "gen_error"])
        for c in report.per_class:
            w.writerow([c.category, _fmt(c.train_acc), _fmt(c.test_acc), _fmt(c.gen_error)])


def write_pred_dist_csv(path, dists: Sequence[PredDistribution]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["category", "bin", "member_mass", "nonmember_mass"])
        for d in dists:
            for b, (mm, nm) in enumerate(zip(d.member_hist, d.nonmember_hist)):
                w.writerow([d.category, b, _fmt(mm), _fmt(nm)])


def write_embedding_csv(path, emb: Embedding2D) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["x", "y", "label", "is_member"])
        for (x, y), lab, mem in zip(emb.points, emb.labels, emb.membership):
            w.writerow([_fmt(x), _fmt(y), int(lab), int(mem)])


def _fmt(v: float) -> str:
    return "" if np.isnan(v) else repr(float(v))
