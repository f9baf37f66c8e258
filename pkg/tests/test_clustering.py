import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coda.clustering import (
    OUTLIER,
    build_mst,
    condense_and_select,
    core_distances,
    hdbscan,
    mutual_reachability,
    single_linkage,
)
from coda.errors import TooFewPoints
from oracles import (
    exhaustive_mst_weight,
    naive_core_distances,
    naive_mutual_reachability,
    naive_single_linkage,
    oracle_hdbscan,
)


def partition_of(result):
    return {frozenset(c.members.tolist()) for c in result.clusters}


# --- core distances ---------------------------------------------------------

def test_core_distances_collinear():
    X = np.array([[0.0], [1.0], [2.0]])
    assert np.allclose(core_distances(X, 1), [1.0, 1.0, 1.0])


def test_core_distances_matches_brute_force():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(4, 3))
    assert np.allclose(core_distances(X, 2), naive_core_distances(X, 2), atol=1e-12)


def test_core_distances_too_few_points():
    with pytest.raises(TooFewPoints):
        core_distances(np.zeros((2, 2)), 3)


# --- mutual reachability ----------------------------------------------------

def test_mreach_coincident_points_use_max_core():
    X = np.array([[0.0, 0.0], [0.0, 0.0], [3.0, 0.0], [5.0, 0.0]])
    core = core_distances(X, 2)
    D = mutual_reachability(X, 2)
    assert D[0, 1] == pytest.approx(max(core[0], core[1]))


def test_mreach_symmetric_and_dominates_euclidean():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(10, 4))
    D = mutual_reachability(X, 3)
    assert np.allclose(D, D.T)
    euclid = np.linalg.norm(X[:, None] - X[None, :], axis=2)
    assert np.all(D + 1e-12 >= euclid)
    assert np.allclose(D, naive_mutual_reachability(X, 3), atol=1e-10)


def test_mreach_hand_evaluation_min_samples_1():
    X = np.array([[0.0], [1.0], [3.0]])
    D = mutual_reachability(X, 1)
    # cores: [1, 1, 2]; pairwise max(core_i, core_j, dist)
    assert D[0, 1] == pytest.approx(1.0)
    assert D[0, 2] == pytest.approx(3.0)
    assert D[1, 2] == pytest.approx(2.0)


# --- MST ---------------------------------------------------------------------

def test_mst_three_points():
    D = np.array([[0.0, 1.0, 3.0], [1.0, 0.0, 2.0], [3.0, 2.0, 0.0]])
    edges = build_mst(D)
    assert sorted(w for _, _, w in edges) == [1.0, 2.0]


def test_mst_total_weight_matches_exhaustive_enumeration():
    rng = np.random.default_rng(2)
    for _ in range(8):
        X = rng.normal(size=(6, 2))
        D = np.linalg.norm(X[:, None] - X[None, :], axis=2)
        edges = build_mst(D)
        total = sum(w for _, _, w in edges)
        assert total == pytest.approx(exhaustive_mst_weight(D), rel=1e-12)


def test_mst_duplicate_weights_tie_rule():
    # equilateral distances: the lexicographically smallest pairs win
    D = np.ones((3, 3)) - np.eye(3)
    edges = build_mst(D)
    pairs = {tuple(sorted(e[:2])) for e in edges}
    assert pairs == {(0, 1), (0, 2)}


# --- single linkage vs naive oracle -----------------------------------------

def test_single_linkage_heights_match_oracle():
    rng = np.random.default_rng(3)
    for n in [5, 12, 24]:
        X = rng.normal(size=(n, 3))
        D = mutual_reachability(X, 3)
        Z = single_linkage(build_mst(D), n)
        oracle_heights = sorted(h for h, _, _ in naive_single_linkage(D))
        assert np.allclose(np.sort(Z[:, 2]), oracle_heights, atol=1e-9)


# --- condensation and selection ---------------------------------------------

def test_two_separated_blobs():
    rng = np.random.default_rng(4)
    X = np.vstack([
        rng.normal(size=(10, 2)) * 0.3,
        rng.normal(size=(10, 2)) * 0.3 + 20.0,
    ])
    res = hdbscan(X, min_cluster_size=5, min_samples=3)
    assert res.n_clusters == 2
    assert res.outlier_rows.size == 0
    assert partition_of(res) == {frozenset(range(10)), frozenset(range(10, 20))}


def test_scattered_points_all_outliers():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(4, 2)) * 10
    res = hdbscan(X, min_cluster_size=5, min_samples=3)
    assert res.n_clusters == 0
    assert np.all(res.labels == OUTLIER)
    assert np.all(res.membership == 0.0)


def test_blob_plus_three_far_points():
    rng = np.random.default_rng(0)
    blob = rng.normal(size=(30, 2))
    far = np.array([[50.0, 0.0], [0.0, -60.0], [-70.0, 40.0]])
    X = np.vstack([blob, far])
    res = hdbscan(X, min_cluster_size=10, min_samples=3)
    assert res.n_clusters == 1
    assert sorted(res.outlier_rows.tolist()) == [30, 31, 32]
    part, outliers = oracle_hdbscan(X, 10, 3)
    assert partition_of(res) == part
    assert frozenset(res.outlier_rows.tolist()) == outliers


def test_planted_modes_recovered():
    rng = np.random.default_rng(6)
    centers = rng.normal(size=(5, 6)) * 8
    X = np.vstack([c + rng.normal(size=(200, 6)) for c in centers])
    truth = np.repeat(np.arange(5), 200)
    res = hdbscan(X, min_cluster_size=50, min_samples=3)
    assert res.n_clusters == 5
    non_outlier = res.labels != OUTLIER
    # majority mode per cluster, then agreement among non-outliers
    agree = 0
    for c in res.clusters:
        modes = truth[c.members]
        agree += int(np.max(np.bincount(modes)))
    assert agree / non_outlier.sum() >= 0.99


def test_all_identical_points_single_cluster():
    X = np.ones((12, 3))
    res = hdbscan(X, min_cluster_size=5, min_samples=3)
    assert res.n_clusters == 1
    assert res.clusters[0].size == 12
    assert np.all(res.membership == 1.0)


def test_planted_offclass_points_are_outliers():
    rng = np.random.default_rng(7)
    X = np.vstack([
        rng.normal(size=(150, 4)),
        rng.normal(size=(10, 4)) + 15.0,  # >= 10 sigma away
    ])
    res = hdbscan(X, min_cluster_size=20, min_samples=3)
    assert set(range(150, 160)) <= set(res.outlier_rows.tolist())


def test_membership_properties():
    rng = np.random.default_rng(8)
    X = np.vstack([
        rng.normal(size=(40, 2)),
        rng.normal(size=(40, 2)) + 15.0,
    ])
    res = hdbscan(X, min_cluster_size=10, min_samples=3)
    assert np.all((res.membership >= 0.0) & (res.membership <= 1.0))
    assert np.all(res.membership[res.labels == OUTLIER] == 0.0)
    covered = np.concatenate([c.members for c in res.clusters]) if res.clusters else []
    assert sorted(covered) == sorted(np.flatnonzero(res.labels != OUTLIER))


def test_no_cluster_below_min_cluster_size_and_monotone_m():
    rng = np.random.default_rng(9)
    X = np.vstack([rng.normal(size=(60, 3)) * 0.5 + off for off in (0.0, 6.0, 12.0, 18.0)])
    previous = None
    for mcs in [3, 5, 10, 20, 40, 80, 200, 300]:
        res = hdbscan(X, mcs, 3)
        assert all(c.size >= mcs for c in res.clusters)
        if previous is not None:
            assert res.n_clusters <= previous
        previous = res.n_clusters


@given(seed=st.integers(min_value=0, max_value=2**31 - 1))
@settings(max_examples=15, deadline=None)
def test_deterministic_for_identical_bytes(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(40, 3))
    a = hdbscan(X, 8, 3)
    b = hdbscan(X.copy(), 8, 3)
    assert np.array_equal(a.labels, b.labels)
    assert np.array_equal(a.membership, b.membership)


def test_flat_clusters_match_oracle_trace_on_random_instances():
    rng = np.random.default_rng(10)
    for trial in range(10):
        n = int(rng.integers(8, 40))
        X = rng.normal(size=(n, 2)) * rng.uniform(0.5, 3.0)
        if trial % 2:
            X[: n // 2] += 10.0
        mcs = int(rng.integers(2, 8))
        res = hdbscan(X, mcs, 3)
        part, outliers = oracle_hdbscan(X, mcs, 3)
        assert partition_of(res) == part
        assert frozenset(res.outlier_rows.tolist()) == outliers
