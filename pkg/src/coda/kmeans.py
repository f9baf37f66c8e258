"""Seeded Lloyd's K-Means with inertia accounting.

Used three ways: candidate-pair seeding inside cluster splits, clustering
the outlier population, and as the plain selection baseline. Determinism is
the contract: identical seeds give bit-identical outcomes, empty clusters
are repaired by reassigning the point farthest from its centroid, and every
tie breaks toward the smallest index.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import DuplicateSeeds, Exhausted, TooFewCandidates, TooFewPoints

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 300


@dataclass(frozen=True)
class KMeansOutcome:
    assignment: np.ndarray    # (n,) labels in {0..k-1}
    centroids: np.ndarray     # (k, d)
    inertia: float
    iterations: int
    seeds_used: np.ndarray    # (k, d) initial centroid rows
    inertia_trace: tuple[float, ...]


def kmeans(X, k: int, seeds, max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL) -> KMeansOutcome:
    """Lloyd iterations from explicit seeds until a fixed point.

    Stops at an assignment fixed point, a squared centroid shift below tol,
    or max_iter. Inertia is asserted non-increasing every iteration.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    seeds = np.asarray(seeds, dtype=np.float64)
    if seeds.shape[0] != k:
        raise ValueError(f"expected {k} seeds, got {seeds.shape[0]}")
    if n < k or k < 1:
        raise TooFewPoints(f"cannot fit k={k} clusters to {n} points")
    if len({tuple(s) for s in seeds}) != k:
        raise DuplicateSeeds("seed rows must be distinct")

    centroids = seeds.copy()
    assignment = _assign(X, centroids)
    assignment = _repair_empty(X, centroids, assignment, k)
    trace = [float(_inertia(X, centroids, assignment))]
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        new_centroids = np.empty_like(centroids)
        for j in range(k):
            new_centroids[j] = X[assignment == j].mean(axis=0)
        shift = float(np.max(np.sum((new_centroids - centroids) ** 2, axis=1)))
        centroids = new_centroids
        new_assignment = _assign(X, centroids)
        new_assignment = _repair_empty(X, centroids, new_assignment, k)
        trace.append(float(_inertia(X, centroids, new_assignment)))
        assert trace[-1] <= trace[-2] * (1.0 + 1e-12) + 1e-9, (
            "inertia increased during Lloyd iteration"
        )
        converged = bool(np.array_equal(new_assignment, assignment)) or shift < tol
        assignment = new_assignment
        if converged:
            break
    # recompute means so centroids match the final assignment exactly
    for j in range(k):
        centroids[j] = X[assignment == j].mean(axis=0)
    inertia = float(_inertia(X, centroids, assignment))
    return KMeansOutcome(assignment, centroids, inertia, iterations, seeds.copy(), tuple(trace))


def _assign(X, centroids) -> np.ndarray:
    d2 = np.sum((X[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
    return np.argmin(d2, axis=1)  # argmin takes the first minimum: smallest index wins


def _repair_empty(X, centroids, assignment, k) -> np.ndarray:
    assignment = assignment.copy()
    for j in range(k):
        if np.any(assignment == j):
            continue
        # donate the point farthest from its current centroid
        dist = np.sum((X - centroids[assignment]) ** 2, axis=1)
        counts = np.bincount(assignment, minlength=k)
        dist[counts[assignment] <= 1] = -1.0  # never empty another cluster
        donor = int(np.argmax(dist))
        assignment[donor] = j
        centroids[j] = X[donor]
    return assignment


def _inertia(X, centroids, assignment) -> float:
    return float(np.sum((X - centroids[assignment]) ** 2))


def kmeans_pp_seeds(X, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding from a dedicated RNG stream; skips zero-distance duplicates."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < k:
        raise TooFewPoints(f"cannot seed k={k} from {n} points")
    chosen = [int(rng.integers(n))]
    d2 = np.sum((X - X[chosen[0]]) ** 2, axis=1)
    while len(chosen) < k:
        total = d2.sum()
        if total <= 0.0:
            raise DuplicateSeeds("fewer than k distinct points available for seeding")
        probs = d2 / total
        chosen.append(int(rng.choice(n, p=probs)))
        d2 = np.minimum(d2, np.sum((X - X[chosen[-1]]) ** 2, axis=1))
    return X[chosen].copy()


def best_pair_split(cluster_points, candidate_reps) -> tuple[KMeansOutcome, tuple[int, int]]:
    """Try every unordered candidate pair as 2-means seeds; keep the lowest inertia.

    Candidates are deduplicated exactly before pairing; ties in the final
    inertia break toward the lexicographically first pair.
    """
    X = np.asarray(cluster_points, dtype=np.float64)
    cands = np.asarray(candidate_reps, dtype=np.float64)
    keep: list[int] = []
    seen: set[tuple] = set()
    for i, c in enumerate(cands):
        key = tuple(c)
        if key not in seen:
            seen.add(key)
            keep.append(i)
    if len(keep) < 2:
        raise TooFewCandidates(f"{len(keep)} distinct candidates, need >= 2")
    if X.shape[0] < 2:
        raise TooFewPoints("cluster must hold at least 2 points to split")
    best: KMeansOutcome | None = None
    best_pair = (-1, -1)
    for i, j in combinations(keep, 2):
        outcome = kmeans(X, 2, np.stack([cands[i], cands[j]]))
        if best is None or outcome.inertia < best.inertia:
            best = outcome
            best_pair = (i, j)
    assert best is not None
    return best, best_pair


def nearest_real_point(centroid, X, taken=frozenset()) -> int:
    """Index of the untaken row closest to centroid; ties break to the smallest index."""
    X = np.asarray(X, dtype=np.float64)
    centroid = np.asarray(centroid, dtype=np.float64)
    d2 = np.sum((X - centroid) ** 2, axis=1)
    if taken:
        d2 = d2.copy()
        d2[list(taken)] = np.inf
    idx = int(np.argmin(d2))
    if not np.isfinite(d2[idx]):
        raise Exhausted("every row is already taken")
    return idx
