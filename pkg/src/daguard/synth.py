"""Synthetic related domains for desk-scale experiments.

Every domain in a family shares the same class centres (same label
semantics); each domain translates all centres by its own shift vector and
draws fresh Gaussian noise around them.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .data import Dataset, Split, split_dataset
from .numcore import spawn_rngs


@dataclass(frozen=True)
class SynthSpec:
    n_per_class: int = 100
    n_classes: int = 4
    dim: int = 20
    domain_shift: float = 0.3
    noise: float = 0.1
    seed: int = 0
    train_fraction: float = 0.8
    # the sensitive side may be smaller than the public one
    target_n_per_class: Optional[int] = None
    target_train_fraction: Optional[float] = None
    center_low: float = 0.2
    center_high: float = 0.8

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.n_per_class < 1:
            raise ValueError("n_per_class must be >= 1")


def class_centers(spec: SynthSpec) -> np.ndarray:
    (rng,) = spawn_rngs(spec.seed, 1)
    return rng.uniform(spec.center_low, spec.center_high, size=(spec.n_classes, spec.dim))


def _shift_vector(seed: int, index: int, dim: int, magnitude: float) -> np.ndarray:
    if magnitude == 0:
        return np.zeros(dim)
    rng = spawn_rngs(seed, index + 2)[index + 1]
    direction = rng.normal(size=dim)
    return magnitude * direction / np.linalg.norm(direction)


def _draw(name: str, centers: np.ndarray, shift: np.ndarray, n_per_class: int, noise: float, rng) -> Dataset:
    n_classes, dim = centers.shape
    labels = np.repeat(np.arange(n_classes), n_per_class)
    x = centers[labels] + shift + rng.normal(0.0, noise, size=(len(labels), dim))
    return Dataset(name, np.clip(x, 0.0, 1.0), labels, n_classes)


def synth_domain_family(
    spec: SynthSpec, shifts: Mapping[str, float], per_class: Optional[Mapping[str, int]] = None
) -> dict[str, Dataset]:
    """One full (unsplit) dataset per named domain; ``shifts`` maps name to shift magnitude.

    Shift directions depend only on (seed, position in ``shifts``), so two
    domains with the same magnitude at different positions differ.
    """
    per_class = per_class or {}
    centers = class_centers(spec)
    out = {}
    for i, (name, magnitude) in enumerate(shifts.items()):
        shift = _shift_vector(spec.seed, i, spec.dim, magnitude)
        draw_rng = spawn_rngs(spec.seed + 7919 * (i + 1), 1)[0]
        n = spec.n_per_class
        if i > 0 and spec.target_n_per_class is not None:
            n = spec.target_n_per_class
        n = per_class.get(name, n)
        out[name] = _draw(name, centers, shift, n, spec.noise, draw_rng)
    return out


def synth_two_domains(spec: SynthSpec) -> tuple[Split, Split]:
    """(source, target) splits; target is the source distribution shifted by ``domain_shift``."""
    fam = synth_domain_family(spec, {"source": 0.0, "target": spec.domain_shift})
    src_rng, tgt_rng = spawn_rngs(spec.seed + 1, 2)
    tgt_fraction = spec.target_train_fraction or spec.train_fraction
    return (
        split_dataset(fam["source"], src_rng, spec.train_fraction),
        split_dataset(fam["target"], tgt_rng, tgt_fraction),
    )


def _blob_prototype(rng: np.random.Generator, size: int, n_blobs: int, low: float, high: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    img = np.zeros((size, size))
    for _ in range(n_blobs):
        cy, cx = rng.uniform(0.1, 0.9, size=2)
        width = rng.uniform(0.08, 0.25)
        amp = rng.uniform(-1.0, 1.0)
        img += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width**2))
    img -= img.min()
    peak = img.max()
    if peak > 0:
        img /= peak
    return low + (high - low) * img


def synth_image_dataset(
    name: str = "images",
    n_classes: int = 4,
    n_per_class: int = 50,
    size: int = 32,
    noise: float = 0.08,
    seed: int = 0,
    n_blobs: int = 6,
    intensity: tuple[float, float] = (0.1, 0.65),
) -> Dataset:
    """Grayscale images: each class is a smooth random prototype plus pixel noise."""
    proto_rng, noise_rng = spawn_rngs(seed, 2)
    protos = np.stack([_blob_prototype(proto_rng, size, n_blobs, *intensity) for _ in range(n_classes)])
    labels = np.repeat(np.arange(n_classes), n_per_class)
    x = protos[labels] + noise_rng.normal(0.0, noise, size=(len(labels), size, size))
    return Dataset(name, np.clip(x, 0.0, 1.0).reshape(len(labels), -1), labels, n_classes, (size, size))
