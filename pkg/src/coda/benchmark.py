"""Synthetic Gaussian-mixture benchmark with ground truth.

Stands in for the image datasets at desk scale: C classes, a fixed number
of unit-variance modes per class, mode centers rescaled so their minimum
pairwise distance equals ``separation`` (in sigma units), and optionally a
fraction of planted cross-class points per class (drawn from another
class's modes but labeled here) for noisy-label experiments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embeddings import EmbeddingSet, make_embedding_set
from .errors import BadSpec
from .seeding import STAGE_BENCH, rng_for


@dataclass(frozen=True)
class BenchmarkSpec:
    classes: int = 10
    modes_per_class: int = 5
    points_per_class: int = 2000
    dim: int = 32
    separation: float = 10.0       # min distance between class centers, in sigma
    noise_fraction: float = 0.0
    test_points_per_class: int = 0

    # modes sit on a ring of this radius (x separation) around their class
    # center, so classes stay compact relative to inter-class distance
    MODE_RADIUS_FACTOR = 0.25
    # per-mode covariances are anisotropic with this sigma_max/sigma_min
    # ratio (mean variance normalized to 1), mimicking the stretched,
    # non-spherical class structure real feature spaces exhibit
    MODE_CONDITION = 4.0

    def validate(self) -> None:
        if self.classes < 1 or self.modes_per_class < 1 or self.points_per_class < 1:
            raise BadSpec("classes, modes_per_class, points_per_class must be >= 1")
        if self.dim < 1:
            raise BadSpec("dim must be >= 1")
        if self.separation <= 0:
            raise BadSpec("separation must be positive")
        if not 0.0 <= self.noise_fraction < 1.0:
            raise BadSpec("noise_fraction must lie in [0, 1)")
        if self.noise_fraction > 0.0 and self.classes < 2:
            raise BadSpec("planted noise needs at least 2 classes")
        if self.test_points_per_class < 0:
            raise BadSpec("test_points_per_class must be >= 0")


@dataclass(frozen=True)
class Benchmark:
    train: EmbeddingSet
    test: EmbeddingSet | None
    centers: np.ndarray          # (classes * modes, dim)
    modes: np.ndarray            # per train row: global mode index
    planted: np.ndarray          # per train row: True for cross-class noise
    true_labels: np.ndarray      # per train row: generating class

    def manifest(self) -> dict:
        return {
            "centers": self.centers.tolist(),
            "modes": self.modes.tolist(),
            "planted": self.planted.astype(int).tolist(),
            "true_labels": self.true_labels.tolist(),
        }


def _mode_noise(transforms: np.ndarray, pick: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((len(pick), transforms.shape[1]))
    return np.einsum("nij,nj->ni", transforms[pick], z)


def _scale_to_min_distance(points: np.ndarray, target: float) -> np.ndarray:
    if points.shape[0] == 1:
        return points
    d2 = np.sum((points[:, None, :] - points[None, :, :]) ** 2, axis=2)
    np.fill_diagonal(d2, np.inf)
    min_dist = float(np.sqrt(d2.min()))
    if min_dist == 0.0:
        raise BadSpec("degenerate center draw (coincident centers)")
    return points * (target / min_dist)


def _place_centers(spec: BenchmarkSpec, rng: np.random.Generator) -> np.ndarray:
    class_centers = _scale_to_min_distance(
        rng.standard_normal((spec.classes, spec.dim)), spec.separation
    )
    radius = spec.MODE_RADIUS_FACTOR * spec.separation
    centers = np.empty((spec.classes * spec.modes_per_class, spec.dim))
    for c in range(spec.classes):
        if spec.modes_per_class == 1:
            offsets = np.zeros((1, spec.dim))
        else:
            raw = rng.standard_normal((spec.modes_per_class, spec.dim))
            offsets = radius * raw / np.linalg.norm(raw, axis=1, keepdims=True)
        start = c * spec.modes_per_class
        centers[start : start + spec.modes_per_class] = class_centers[c] + offsets
    return centers


def _mode_transforms(spec: BenchmarkSpec, rng: np.random.Generator) -> np.ndarray:
    """One (dim x dim) covariance factor per mode: random rotation x axis scales."""
    k = spec.classes * spec.modes_per_class
    half = np.log(spec.MODE_CONDITION) / 2.0
    out = np.empty((k, spec.dim, spec.dim))
    for m in range(k):
        q, _ = np.linalg.qr(rng.standard_normal((spec.dim, spec.dim)))
        scales = np.exp(np.linspace(-half, half, spec.dim))
        scales /= np.sqrt(np.mean(scales**2))  # mean variance 1
        out[m] = q * scales
    return out


def make_benchmark(spec: BenchmarkSpec, seed: int) -> Benchmark:
    """Seeded generator; identical (spec, seed) pairs are byte-identical."""
    spec.validate()
    rng = rng_for(seed, STAGE_BENCH)
    centers = _place_centers(spec, rng)
    transforms = _mode_transforms(spec, rng)

    n_noise = int(spec.noise_fraction * spec.points_per_class)
    vectors, labels, ids = [], [], []
    modes, planted, true_labels = [], [], []
    for c in range(1, spec.classes + 1):
        own_modes = np.arange((c - 1) * spec.modes_per_class, c * spec.modes_per_class)
        n_clean = spec.points_per_class - n_noise
        pick = own_modes[rng.integers(0, spec.modes_per_class, size=n_clean)]
        points = centers[pick] + _mode_noise(transforms, pick, rng)
        vectors.append(points)
        modes.extend(int(m) for m in pick)
        planted.extend([False] * n_clean)
        true_labels.extend([c] * n_clean)
        if n_noise:
            src = c + 1 if c < spec.classes else 1
            src_modes = np.arange((src - 1) * spec.modes_per_class, src * spec.modes_per_class)
            pick = src_modes[rng.integers(0, spec.modes_per_class, size=n_noise)]
            noise = centers[pick] + _mode_noise(transforms, pick, rng)
            vectors.append(noise)
            modes.extend(int(m) for m in pick)
            planted.extend([True] * n_noise)
            true_labels.extend([src] * n_noise)
        labels.extend([c] * spec.points_per_class)
        ids.extend(f"c{c}_r{i}" for i in range(spec.points_per_class))
    train = make_embedding_set(np.vstack(vectors), ids, labels)

    test = None
    if spec.test_points_per_class:
        t_vectors, t_labels, t_ids = [], [], []
        for c in range(1, spec.classes + 1):
            own_modes = np.arange((c - 1) * spec.modes_per_class, c * spec.modes_per_class)
            pick = own_modes[rng.integers(0, spec.modes_per_class, size=spec.test_points_per_class)]
            t_vectors.append(centers[pick] + _mode_noise(transforms, pick, rng))
            t_labels.extend([c] * spec.test_points_per_class)
            t_ids.extend(f"test_c{c}_r{i}" for i in range(spec.test_points_per_class))
        test = make_embedding_set(np.vstack(t_vectors), t_ids, t_labels)

    return Benchmark(
        train,
        test,
        centers,
        np.asarray(modes, dtype=np.int64),
        np.asarray(planted, dtype=bool),
        np.asarray(true_labels, dtype=np.int64),
    )
