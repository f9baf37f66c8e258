"""Distilled-set quality at desk scale.

A light proxy classifier (nearest-centroid or k-NN) replaces downstream
network training; distribution match is the closed-form Gaussian Fréchet
distance; pseudo-labeling extends a small labeled seed set by cosine
similarity to class centers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCovariance, EmptyClass, ValidationError

_SHRINKAGE = 1e-6
_EIG_FLOOR = 1e-10


@dataclass(frozen=True)
class ProxyClassifier:
    kind: str                      # "nearest-centroid" | "knn"
    classes: tuple[int, ...]
    centroids: np.ndarray | None = None   # (C, d) for nearest-centroid
    reference: np.ndarray | None = None   # (n, d) for knn
    reference_labels: np.ndarray | None = None
    k: int = 1


@dataclass
class EvalReport:
    accuracy: float
    per_class: dict[int, float]
    n_test: int
    frechet: float | None = None
    provenance: dict[str, float] | None = None
    config_echo: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class": {str(k): v for k, v in sorted(self.per_class.items())},
            "n_test": self.n_test,
            "frechet": self.frechet,
            "provenance": self.provenance,
            "config": self.config_echo,
        }


def fit_proxy(train_X, train_y, kind: str = "nearest-centroid", k: int = 1) -> ProxyClassifier:
    """Deterministic fit on the selected/synthetic set only (never test data)."""
    X = np.asarray(train_X, dtype=np.float64)
    y = np.asarray(train_y, dtype=np.int64)
    if X.shape[0] != y.shape[0] or X.shape[0] == 0:
        raise ValidationError("training vectors and labels must align and be non-empty")
    classes = tuple(int(c) for c in np.unique(y))
    if kind == "nearest-centroid":
        centroids = np.empty((len(classes), X.shape[1]))
        for i, c in enumerate(classes):
            rows = X[y == c]
            if rows.shape[0] == 0:
                raise EmptyClass(f"class {c} has no training samples")
            centroids[i] = rows.mean(axis=0)
        return ProxyClassifier(kind, classes, centroids=centroids)
    if kind == "knn":
        return ProxyClassifier(kind, classes, reference=X, reference_labels=y, k=k)
    raise ValidationError(f"unknown proxy kind {kind!r}")


def predict(clf: ProxyClassifier, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if clf.kind == "nearest-centroid":
        d2 = np.sum((X[:, None, :] - clf.centroids[None, :, :]) ** 2, axis=2)
        nearest = np.argmin(d2, axis=1)
        return np.array([clf.classes[i] for i in nearest], dtype=np.int64)
    d2 = np.sum((X[:, None, :] - clf.reference[None, :, :]) ** 2, axis=2)
    order = np.argsort(d2, axis=1, kind="stable")[:, : clf.k]
    out = np.empty(X.shape[0], dtype=np.int64)
    for i, neighbors in enumerate(order):
        votes = clf.reference_labels[neighbors]
        counts = np.bincount(votes)
        out[i] = int(np.argmax(counts))  # vote ties break to the smallest class id
    return out


def evaluate(clf: ProxyClassifier, test_X, test_y) -> EvalReport:
    """Top-1 accuracy with a per-class breakdown; order-invariant and deterministic."""
    X = np.asarray(test_X, dtype=np.float64)
    y = np.asarray(test_y, dtype=np.int64)
    if X.shape[0] == 0:
        raise ValidationError("test set must be non-empty")
    pred = predict(clf, X)
    hits = pred == y
    per_class = {
        int(c): float(hits[y == c].mean()) for c in np.unique(y)
    }
    return EvalReport(float(hits.mean()), per_class, int(X.shape[0]))


def _fit_gaussian(X) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if n < 2 or not np.isfinite(X).all():
        raise DegenerateCovariance(f"cannot fit a covariance to {n} finite rows")
    mu = X.mean(axis=0)
    cov = np.cov(X, rowvar=False)
    cov = np.atleast_2d(cov)
    if n < 2 * d:
        cov = cov + _SHRINKAGE * np.eye(d)
    return mu, cov


def _psd_sqrt(M: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((M + M.T) / 2.0)
    vals = np.where(vals < _EIG_FLOOR, 0.0, vals)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(A, B) -> float:
    """||mu_A - mu_B||^2 + tr(S_A + S_B - 2 (S_A S_B)^(1/2)) on fitted Gaussians.

    The cross square root uses the symmetrized product
    S_A^(1/2) S_B S_A^(1/2), which shares its spectrum with S_A S_B and is
    PSD by construction.
    """
    mu_a, cov_a = _fit_gaussian(A)
    mu_b, cov_b = _fit_gaussian(B)
    root_a = _psd_sqrt(cov_a)
    cross = _psd_sqrt(root_a @ cov_b @ root_a)
    value = float(
        np.sum((mu_a - mu_b) ** 2)
        + np.trace(cov_a)
        + np.trace(cov_b)
        - 2.0 * np.trace(cross)
    )
    return max(value, 0.0)


@dataclass
class PseudoLabelResult:
    indices: np.ndarray    # rows of the unlabeled pool that were admitted
    labels: np.ndarray     # assigned class per admitted row
    n_discarded: int
    n_zero_vectors: int


def pseudo_label(labeled_X, labeled_y, unlabeled_X, threshold: float = 0.85) -> PseudoLabelResult:
    """Assign labels by cosine similarity to per-class centers of the labeled seed.

    A vector is admitted when its best similarity reaches the threshold
    (>=, so threshold=1.0 admits exactly the exact-direction matches);
    zero vectors have no direction and are discarded with a diagnostic count.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValidationError(f"threshold must be in (0, 1], got {threshold}")
    X = np.asarray(labeled_X, dtype=np.float64)
    y = np.asarray(labeled_y, dtype=np.int64)
    U = np.asarray(unlabeled_X, dtype=np.float64)
    classes = [int(c) for c in np.unique(y)]
    if not classes:
        raise EmptyClass("labeled seed set is empty")
    centers = np.stack([X[y == c].mean(axis=0) for c in classes])
    center_norms = np.linalg.norm(centers, axis=1)
    u_norms = np.linalg.norm(U, axis=1)
    zero_mask = u_norms == 0.0

    sims = np.full((U.shape[0], len(classes)), -np.inf)
    valid_centers = center_norms > 0.0
    if valid_centers.any():
        dots = U @ centers[valid_centers].T
        denom = np.outer(u_norms, center_norms[valid_centers])
        with np.errstate(invalid="ignore", divide="ignore"):
            sims[:, valid_centers] = np.where(denom > 0.0, dots / denom, -np.inf)
    best = np.argmax(sims, axis=1)
    best_sim = sims[np.arange(U.shape[0]), best]
    admitted = (best_sim >= threshold) & ~zero_mask
    indices = np.flatnonzero(admitted)
    labels = np.array([classes[b] for b in best[admitted]], dtype=np.int64)
    return PseudoLabelResult(
        indices,
        labels,
        n_discarded=int((~admitted).sum()),
        n_zero_vectors=int(zero_mask.sum()),
    )
