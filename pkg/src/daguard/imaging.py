"""Image-domain operations: domain representatives, DCT perceptual hashes,
domain similarity, and the four photometric/blur perturbations."""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .data import Dataset, Domain
from .errors import UnsupportedError

HASH_SIZE = 8
HASH_BITS = HASH_SIZE * HASH_SIZE
RESAMPLE_SIZE = 32
SNAP_TOL = 1e-9

PERTURBATIONS = ("brightness", "contrast", "gaussian_noise", "motion_blur")
DEFAULT_SEVERITY = {
    "brightness": 0.3,
    "contrast": 0.4,
    "gaussian_noise": 0.08,
    "motion_blur": 9.0,
}


def domain_norm(domain: Domain) -> np.ndarray:
    """Element-wise mean image over every sample of every member dataset."""
    shapes = {d.image_shape for d in domain.datasets}
    if None in shapes:
        raise UnsupportedError(f"domain {domain.name} is not image-valued")
    if len(shapes) != 1:
        raise UnsupportedError(f"domain {domain.name} mixes image shapes {sorted(shapes)}")
    total = sum(len(d) for d in domain.datasets)
    if total == 0:
        raise ValueError(f"domain {domain.name} has no samples")
    acc = sum(d.features.sum(axis=0) for d in domain.datasets)
    (shape,) = shapes
    return np.clip(acc / total, 0.0, 1.0).reshape(shape)


@lru_cache(maxsize=None)
def area_matrix(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) box-mean resampling weights: output cell i averages input
    span [i*n_in/n_out, (i+1)*n_in/n_out), pixels weighted by overlap."""
    m = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        lo, hi = i * scale, (i + 1) * scale
        for j in range(int(np.floor(lo)), min(int(np.ceil(hi)), n_in)):
            m[i, j] = min(hi, j + 1) - max(lo, j)
    return m / scale


def box_resize(img: np.ndarray, size: int = RESAMPLE_SIZE) -> np.ndarray:
    h, w = img.shape
    return area_matrix(h, size) @ img @ area_matrix(w, size).T


@lru_cache(maxsize=None)
def dct_matrix(n: int) -> np.ndarray:
    """Unnormalised DCT-II: X_k = 2 * sum_j x_j cos(pi k (2j + 1) / 2n)."""
    k = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    return 2.0 * np.cos(np.pi * k * (2 * j + 1) / (2 * n))


def dct2(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    return dct_matrix(h) @ img @ dct_matrix(w).T


@dataclass(frozen=True)
class Fingerprint:
    """64-bit perceptual hash; bit 0 is the most significant."""

    bits: int
    bit_length: int = HASH_BITS

    def __sub__(self, other: "Fingerprint") -> int:
        return hamming(self, other)

    def __str__(self) -> str:
        return f"{self.bits:016x}"

    def bit(self, k: int) -> int:
        return (self.bits >> (self.bit_length - 1 - k)) & 1


def hamming(a: Fingerprint, b: Fingerprint) -> int:
    if a.bit_length != b.bit_length:
        raise ValueError("fingerprints of different lengths")
    return (a.bits ^ b.bits).bit_count()


def phash_bits(img) -> np.ndarray:
    """The 8x8 boolean bit block before packing."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("phash expects a 2-D grayscale image")
    if min(img.shape) < HASH_SIZE:
        raise ValueError(f"image {img.shape} is smaller than {HASH_SIZE}x{HASH_SIZE}")
    coeffs = dct2(box_resize(img))[:HASH_SIZE, :HASH_SIZE]
    # round-off leaves ~1e-13 AC terms on flat images; snap them to exact zero
    coeffs[np.abs(coeffs) <= SNAP_TOL * max(abs(coeffs[0, 0]), 1.0)] = 0.0
    ac = np.delete(coeffs.ravel(), 0)
    bits = coeffs > np.median(ac)
    # DC carries only mean brightness; its bit is pinned to 0.
    bits[0, 0] = False
    return bits


def phash(img) -> Fingerprint:
    value = 0
    for b in phash_bits(img).ravel():
        value = (value << 1) | int(b)
    return Fingerprint(value)


def similarity(source: Domain, target: Domain) -> float:
    """1 - hamming(phash(norm(source)), phash(norm(target))) / 64."""
    h = hamming(phash(domain_norm(source)), phash(domain_norm(target)))
    return 1.0 - h / HASH_BITS


def _motion_blur(imgs: np.ndarray, length: int) -> np.ndarray:
    left = (length - 1) // 2
    right = length - 1 - left
    padded = np.pad(imgs, ((0, 0), (0, 0), (left, right)), mode="edge")
    csum = np.cumsum(padded, axis=2)
    csum = np.concatenate([np.zeros(csum.shape[:2] + (1,)), csum], axis=2)
    return (csum[:, :, length:] - csum[:, :, :-length]) / length


def perturb(ds: Dataset, kind: str, severity: float | None = None, rng: np.random.Generator | None = None) -> Dataset:
    """Apply one perturbation to every image; size, labels and shape are kept."""
    if kind not in PERTURBATIONS:
        raise ValueError(f"unknown perturbation {kind!r}; choose from {', '.join(PERTURBATIONS)}")
    if ds.image_shape is None:
        raise UnsupportedError(f"{ds.name} is not image-valued")
    severity = DEFAULT_SEVERITY[kind] if severity is None else float(severity)
    if severity < 0 or not np.isfinite(severity):
        raise ValueError(f"severity must be a finite non-negative number, got {severity}")

    x = ds.images()
    if kind == "brightness":
        out = x + severity
    elif kind == "contrast":
        means = x.mean(axis=(1, 2), keepdims=True)
        out = (x - means) * severity + means
    elif kind == "gaussian_noise":
        if rng is None:
            raise ValueError("gaussian_noise needs an rng")
        out = x + rng.normal(0.0, severity, size=x.shape)
    else:
        length = int(round(severity))
        if length < 1:
            raise ValueError("motion_blur length must round to at least 1")
        out = _motion_blur(x, length)
    out = np.clip(out, 0.0, 1.0).reshape(len(ds), -1)
    return replace(ds, name=f"{kind}({ds.name})", features=out)
