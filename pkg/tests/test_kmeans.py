import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coda.errors import DuplicateSeeds, Exhausted, TooFewCandidates, TooFewPoints
from coda.kmeans import (
    best_pair_split,
    kmeans,
    kmeans_pp_seeds,
    nearest_real_point,
)
from oracles import enumerate_min_two_partition_inertia


def test_two_separated_pairs():
    X = np.array([[0.0, 0.0], [1.0, 0.0], [10.0, 0.0], [11.0, 0.0]])
    out = kmeans(X, 2, seeds=X[[0, 2]])
    assert sorted(map(tuple, out.centroids.tolist())) == [(0.5, 0.0), (10.5, 0.0)]
    # each pair contributes two squared half-gaps of 0.5^2
    assert out.inertia == pytest.approx(4 * 0.25)


def test_k1_is_the_mean():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(20, 3))
    out = kmeans(X, 1, seeds=X[:1])
    assert np.allclose(out.centroids[0], X.mean(axis=0))
    assert out.inertia == pytest.approx(float(np.sum((X - X.mean(axis=0)) ** 2)))


def test_k2_reaches_exhaustive_minimum_over_all_seed_pairs():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(8, 2))
    oracle = enumerate_min_two_partition_inertia(X)
    best = min(
        kmeans(X, 2, seeds=X[[i, j]]).inertia
        for i in range(8)
        for j in range(i + 1, 8)
    )
    assert best == pytest.approx(oracle, rel=1e-9)


def test_inertia_trace_non_increasing():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(50, 4))
    out = kmeans(X, 4, seeds=X[:4])
    assert all(b <= a + 1e-9 for a, b in zip(out.inertia_trace, out.inertia_trace[1:]))


def test_errors():
    X = np.zeros((3, 2))
    with pytest.raises(DuplicateSeeds):
        kmeans(np.arange(8.0).reshape(4, 2), 2, seeds=np.zeros((2, 2)))
    with pytest.raises(TooFewPoints):
        kmeans(X[:1], 2, seeds=np.arange(4.0).reshape(2, 2))


@given(seed=st.integers(min_value=0, max_value=10_000))
@settings(max_examples=25, deadline=None)
def test_seeded_determinism(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, 3))
    seeds = X[:3]
    a = kmeans(X, 3, seeds)
    b = kmeans(X.copy(), 3, seeds.copy())
    assert np.array_equal(a.assignment, b.assignment)
    assert np.array_equal(a.centroids, b.centroids)
    assert a.inertia == b.inertia


def test_best_pair_split_single_pair_identity():
    X = np.array([[0.0], [1.0], [10.0], [11.0]])
    outcome, pair = best_pair_split(X, X[[0, 2]])
    assert pair == (0, 1)
    assert outcome.inertia == pytest.approx(1.0)


def test_best_pair_split_dumbbell_argmin():
    rng = np.random.default_rng(3)
    lobe_a = rng.normal(size=(20, 2)) * 0.2
    lobe_b = rng.normal(size=(20, 2)) * 0.2 + [8.0, 0.0]
    X = np.vstack([lobe_a, lobe_b])
    # candidates: two lobe representatives and two mid-bar stragglers
    candidates = np.array([[0.0, 0.0], [8.0, 0.0], [4.0, 2.0], [4.0, -2.0]])
    outcome, pair = best_pair_split(X, candidates)
    assert pair == (0, 1)
    # verify against scanning every pair explicitly
    best = min(
        kmeans(X, 2, seeds=candidates[[i, j]]).inertia
        for i in range(4)
        for j in range(i + 1, 4)
        if not np.array_equal(candidates[i], candidates[j])
    )
    assert outcome.inertia == pytest.approx(best)


def test_best_pair_split_identical_candidates():
    X = np.arange(10.0).reshape(5, 2)
    with pytest.raises(TooFewCandidates):
        best_pair_split(X, np.ones((3, 2)))


def test_nearest_real_point_rules():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    assert nearest_real_point(np.array([1.9]), X) == 2
    assert nearest_real_point(np.array([1.0]), X, taken={1}) == 0  # tie 0 vs 2 -> smallest
    assert nearest_real_point(np.array([1.5]), X) == 1  # equidistant 1 and 2 -> smallest
    with pytest.raises(Exhausted):
        nearest_real_point(np.array([0.0]), X, taken={0, 1, 2, 3})


def test_nearest_real_point_matches_linear_scan():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(40, 3))
    c = rng.normal(size=3)
    idx = nearest_real_point(c, X)
    assert idx == int(np.argmin([np.sum((x - c) ** 2) for x in X]))


def test_kmeans_pp_deterministic_and_distinct():
    rng_a = np.random.default_rng(11)
    rng_b = np.random.default_rng(11)
    X = np.random.default_rng(5).normal(size=(25, 2))
    seeds_a = kmeans_pp_seeds(X, 5, rng_a)
    seeds_b = kmeans_pp_seeds(X, 5, rng_b)
    assert np.array_equal(seeds_a, seeds_b)
    assert len({tuple(s) for s in seeds_a}) == 5
