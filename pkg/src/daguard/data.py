"""Datasets, train/non-train splits and multi-dataset domains."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ShapeError


@dataclass(frozen=True)
class Dataset:
    """One sample per row, features in [0, 1]."""

    name: str
    features: np.ndarray
    labels: Optional[np.ndarray]
    n_categories: int
    image_shape: Optional[tuple[int, int]] = None

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2:
            raise ShapeError(f"features must be 2-D, got {feats.shape}")
        object.__setattr__(self, "features", feats)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (len(feats),):
                raise ShapeError("labels must match the number of rows")
            if len(labels) and (labels.min() < 0 or labels.max() >= self.n_categories):
                raise ValueError(f"labels outside [0, {self.n_categories})")
            object.__setattr__(self, "labels", labels)
        if self.image_shape is not None:
            h, w = self.image_shape
            if h * w != feats.shape[1]:
                raise ShapeError(f"image_shape {self.image_shape} does not match width {feats.shape[1]}")
            object.__setattr__(self, "image_shape", (int(h), int(w)))

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def width(self) -> int:
        return self.features.shape[1]

    @property
    def is_labeled(self) -> bool:
        return self.labels is not None

    def take(self, idx, name: Optional[str] = None) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        labels = None if self.labels is None else self.labels[idx]
        return replace(self, name=name or self.name, features=self.features[idx], labels=labels)

    def images(self) -> np.ndarray:
        if self.image_shape is None:
            raise ValueError(f"{self.name} is not image-valued")
        return self.features.reshape(len(self), *self.image_shape)

    def without_labels(self) -> "UnlabeledDataset":
        return UnlabeledDataset(self.name, self.features, self.n_categories, self.image_shape)


@dataclass(frozen=True)
class UnlabeledDataset:
    """What domain-adaptation trainers see of the sensitive data: no labels attribute at all."""

    name: str
    features: np.ndarray
    n_categories: int
    image_shape: Optional[tuple[int, int]] = None

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def width(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class Split:
    train: Dataset
    non_train: Dataset
    train_fraction: float = 0.8

    @property
    def name(self) -> str:
        return self.train.name

    @property
    def n_categories(self) -> int:
        return self.train.n_categories

    def without_labels(self) -> "UnlabeledSplit":
        return UnlabeledSplit(self.train.without_labels(), self.non_train.without_labels())


@dataclass(frozen=True)
class UnlabeledSplit:
    train: UnlabeledDataset
    non_train: UnlabeledDataset

    @property
    def n_categories(self) -> int:
        return self.train.n_categories


def split_dataset(ds: Dataset, rng: np.random.Generator, train_fraction: float = 0.8) -> Split:
    """Disjoint split; labeled data is stratified so every category lands in both parts when it can."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    if ds.labels is None:
        groups = [np.arange(len(ds))]
    else:
        groups = [np.flatnonzero(ds.labels == c) for c in range(ds.n_categories)]
    train_idx, test_idx = [], []
    for g in groups:
        g = rng.permutation(g)
        k = int(round(train_fraction * len(g)))
        if len(g) >= 2:
            k = min(max(k, 1), len(g) - 1)
        train_idx.append(g[:k])
        test_idx.append(g[k:])
    tr = np.sort(np.concatenate(train_idx))
    te = np.sort(np.concatenate(test_idx))
    return Split(ds.take(tr), ds.take(te), train_fraction)


@dataclass(frozen=True)
class Domain:
    """An ordered collection of datasets d_1..d_n sharing label space and feature width."""

    datasets: tuple[Dataset, ...] = field(default_factory=tuple)

    def __post_init__(self):
        ds = tuple(self.datasets)
        object.__setattr__(self, "datasets", ds)
        if not ds:
            raise ValueError("a domain needs at least one dataset")
        first = ds[0]
        for d in ds[1:]:
            if d.n_categories != first.n_categories or d.width != first.width:
                raise ShapeError(f"{d.name} is incompatible with {first.name}")

    @property
    def name(self) -> str:
        return "+".join(d.name for d in self.datasets)


def domain_size(domain: Domain) -> int:
    return sum(len(d) for d in domain.datasets)


def domain_diversity(domain: Domain) -> int:
    return len(domain.datasets)


def mix(a: Dataset, b: Dataset, name: Optional[str] = None) -> Dataset:
    """Concatenate two datasets, a's rows first."""
    if a.n_categories != b.n_categories or a.width != b.width:
        raise ShapeError(f"cannot mix {a.name} ({a.width} cols) with {b.name} ({b.width} cols)")
    if a.is_labeled != b.is_labeled:
        raise ShapeError("cannot mix labeled with unlabeled data")
    labels = None if a.labels is None else np.concatenate([a.labels, b.labels])
    shape = a.image_shape if a.image_shape == b.image_shape else None
    return Dataset(
        name or f"Mix({a.name}+{b.name})",
        np.vstack([a.features, b.features]),
        labels,
        a.n_categories,
        shape,
    )


def mix_all(datasets: Sequence[Dataset], name: Optional[str] = None) -> Dataset:
    out = datasets[0]
    for d in datasets[1:]:
        out = mix(out, d)
    return out if name is None else replace(out, name=name)


def subset_per_category(ds: Dataset, k: int, rng: np.random.Generator) -> Dataset:
    """At most ``k`` samples of every category, drawn without replacement, original order kept."""
    if ds.labels is None:
        raise ValueError("subset_per_category needs labels")
    if k < 1:
        raise ValueError("k must be at least 1")
    keep = []
    for c in range(ds.n_categories):
        idx = np.flatnonzero(ds.labels == c)
        if len(idx) > k:
            idx = rng.choice(idx, size=k, replace=False)
        keep.append(idx)
    return ds.take(np.sort(np.concatenate(keep)))
