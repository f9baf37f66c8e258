"""Turn an arbitrary clustering into exactly IPC representatives per class.

When the cluster count M already meets the budget, the IPC largest clusters
are kept (truncation). Otherwise three strategies grow the set: splitting
viable mother clusters at the configured granularity, clustering the outlier
population, and force-splitting with a geometrically relaxed size floor.
Every representative carries provenance (InitCluster | Split | Outlier |
ForcedSplit) and the size of the cluster that produced it, which feeds the
source-distribution report.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .clustering import (
    ClusterInfo,
    ClusterResult,
    linkage_for_points,
    select_from_linkage,
)
from .errors import (
    CannotReachIPC,
    DuplicateSeeds,
    EmptyCluster,
    InsufficientOutliers,
    TooFewCandidates,
    TooFewPoints,
)
from .kmeans import best_pair_split, kmeans, kmeans_pp_seeds, nearest_real_point


class Provenance(str, Enum):
    INIT_CLUSTER = "InitCluster"
    SPLIT = "Split"
    OUTLIER = "Outlier"
    FORCED_SPLIT = "ForcedSplit"


_PROVENANCE_RANK = {
    Provenance.INIT_CLUSTER: 0,
    Provenance.SPLIT: 1,
    Provenance.OUTLIER: 2,
    Provenance.FORCED_SPLIT: 3,
}


@dataclass(frozen=True)
class RepresentativeEntry:
    row: int                      # row index within the class view
    provenance: Provenance
    source_cluster_size: int


@dataclass
class WorkState:
    """Mutable S/C/W bookkeeping shared by the three strategies.

    Clusters in C are pairwise disjoint row sets; S holds exactly one
    representative per live cluster. The worklist W contains ids of clusters
    viable for splitting (|c| > 2 * min_cluster_size at push time).
    """

    X: np.ndarray
    clusters: dict[int, np.ndarray] = field(default_factory=dict)
    reps: dict[int, RepresentativeEntry] = field(default_factory=dict)
    worklist: list[int] = field(default_factory=list)
    outliers: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    taken: set[int] = field(default_factory=set)
    unsplittable: set[int] = field(default_factory=set)
    next_id: int = 0
    transitions: int = 0
    # dendrograms are min_cluster_size-independent; cache per cluster so the
    # relaxation ladder re-condenses instead of re-clustering
    linkage_cache: dict[int, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_result(cls, X, result: ClusterResult) -> "WorkState":
        X = np.asarray(X, dtype=np.float64)
        state = cls(X=X)
        for info in result.clusters:
            row = pick_representative(info, result)
            entry = RepresentativeEntry(row, Provenance.INIT_CLUSTER, info.size)
            state.clusters[info.cluster_id] = info.members.copy()
            state.reps[info.cluster_id] = entry
            state.taken.add(row)
        state.outliers = result.outlier_rows.copy()
        state.next_id = max(state.clusters, default=-1) + 1
        return state

    def pop_largest(self) -> int:
        best = max(self.worklist, key=lambda cid: (self.clusters[cid].size, -cid))
        self.worklist.remove(best)
        self.transitions += 1
        return best

    def add_cluster(self, members: np.ndarray, entry: RepresentativeEntry) -> int:
        cid = self.next_id
        self.next_id += 1
        self.clusters[cid] = members
        self.reps[cid] = entry
        self.taken.add(entry.row)
        return cid

    def drop_cluster(self, cid: int) -> None:
        self.taken.discard(self.reps[cid].row)
        del self.clusters[cid]
        del self.reps[cid]
        self.linkage_cache.pop(cid, None)


def pick_representative(cluster: ClusterInfo, result: ClusterResult) -> int:
    """Member with maximal membership probability; ties go to the smallest row."""
    if cluster.size == 0:
        raise EmptyCluster(f"cluster {cluster.cluster_id} has no members")
    probs = result.membership[cluster.members]
    return int(cluster.members[int(np.argmax(probs))])  # members ascending: first max wins


def truncate_to_ipc(state: WorkState, ipc: int) -> list[RepresentativeEntry]:
    """Keep the representatives of the IPC largest clusters (size ties: smaller id)."""
    order = sorted(state.clusters, key=lambda cid: (-state.clusters[cid].size, cid))
    return [state.reps[cid] for cid in order[:ipc]]


def split_cluster(
    state: WorkState,
    mother: int,
    min_cluster_size: int,
    min_samples: int,
    provenance: Provenance = Provenance.SPLIT,
) -> bool:
    """One SplitCluster attempt; False leaves the state untouched.

    Inner clustering runs on the mother's points alone; sub-cluster
    representatives seed the candidate 2-means pairs, and each child's
    representative is its nearest real member to the child centroid. On
    success the mother's single representative is replaced by two new ones
    and children viable at min_cluster_size join the worklist.
    """
    members = state.clusters[mother]
    sub_X = state.X[members]
    Z = state.linkage_cache.get(mother)
    if Z is None:
        try:
            Z = linkage_for_points(sub_X, min_samples)
        except TooFewPoints:
            return False
        state.linkage_cache[mother] = Z
    sub = select_from_linkage(Z, len(members), min_cluster_size, min_samples)
    if sub.n_clusters < 2:
        return False
    candidates = [pick_representative(info, sub) for info in sub.clusters]
    try:
        outcome, _ = best_pair_split(sub_X, sub_X[candidates])
    except TooFewCandidates:
        return False

    state.drop_cluster(mother)
    if mother in state.worklist:
        state.worklist.remove(mother)

    local_taken = {i for i, g in enumerate(members) if int(g) in state.taken}
    for j in (0, 1):
        child_local = np.flatnonzero(outcome.assignment == j)
        child_rows = members[child_local]
        rep_child_local = nearest_real_point(
            outcome.centroids[j],
            sub_X[child_local],
            taken={k for k, loc in enumerate(child_local) if loc in local_taken},
        )
        rep_row = int(child_rows[rep_child_local])
        local_taken.add(int(child_local[rep_child_local]))
        entry = RepresentativeEntry(rep_row, provenance, int(child_rows.size))
        cid = state.add_cluster(np.sort(child_rows), entry)
        if child_rows.size > 2 * min_cluster_size:
            state.worklist.append(cid)
    state.transitions += 1
    return True


def forced_split(state: WorkState, mother: int, min_size: int, min_samples: int) -> bool:
    """Retry split_cluster with min_size relaxed by x0.75 (floor 2) until it lands.

    A mother that stays whole even at min_size=2 is marked unsplittable and
    recorded as a diagnostic; the state is otherwise unchanged.
    """
    size = min_size
    while True:
        if split_cluster(state, mother, size, min_samples, Provenance.FORCED_SPLIT):
            return True
        if size <= 2:
            state.unsplittable.add(mother)
            return False
        size = max(2, int(size * 0.75))


def cluster_outliers(state: WorkState, k_needed: int, rng: np.random.Generator) -> None:
    """Strategy 2: k-means over the outlier population, one real representative each."""
    pool = state.outliers
    if not 1 <= k_needed <= pool.size:
        raise InsufficientOutliers(
            f"need {k_needed} representatives from {pool.size} outliers"
        )
    if k_needed == pool.size:
        groups = [np.array([i]) for i in range(pool.size)]
        centroids = state.X[pool]
    else:
        pool_X = state.X[pool]
        try:
            seeds = kmeans_pp_seeds(pool_X, k_needed, rng)
            outcome = kmeans(pool_X, k_needed, seeds)
        except DuplicateSeeds as exc:
            raise InsufficientOutliers(
                f"outlier population has too few distinct points: {exc}"
            ) from exc
        groups = [np.flatnonzero(outcome.assignment == j) for j in range(k_needed)]
        centroids = outcome.centroids
    local_taken = {i for i, g in enumerate(pool) if int(g) in state.taken}
    for j, group in enumerate(groups):
        rep_local = nearest_real_point(centroids[j], state.X[pool], taken=local_taken)
        local_taken.add(rep_local)
        entry = RepresentativeEntry(
            int(pool[rep_local]), Provenance.OUTLIER, int(group.size)
        )
        state.add_cluster(np.sort(pool[group]), entry)
    state.transitions += 1


def match_ipc(
    X,
    result: ClusterResult,
    ipc: int,
    min_cluster_size: int,
    min_samples: int,
    rng: np.random.Generator,
) -> list[RepresentativeEntry]:
    """Run the full post-processing scheme and return exactly ``ipc`` entries.

    Control flow: truncation when M >= IPC; otherwise Strategy 1 over the
    worklist (largest first), Strategy 2 when enough outliers remain, and
    Strategy 3 over a rebuilt worklist with relaxation. Raises CannotReachIPC
    with a diagnostic payload if every avenue is exhausted.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < ipc:
        raise TooFewPoints(f"class has {n} points, cannot select {ipc}")
    state = WorkState.from_result(X, result)
    m0 = len(state.clusters)
    budget = 8 * ipc + 2 * m0 + 16  # finiteness guard, see module invariants

    if m0 >= ipc:
        entries = truncate_to_ipc(state, ipc)
        return _finalize(entries, ipc)

    state.worklist = [
        cid for cid in sorted(state.clusters)
        if state.clusters[cid].size > 2 * min_cluster_size
    ]
    while len(state.reps) < ipc and state.worklist:
        mother = state.pop_largest()
        split_cluster(state, mother, min_cluster_size, min_samples, Provenance.SPLIT)
        assert state.transitions <= budget, "post-processing exceeded its step budget"

    if len(state.reps) < ipc:
        k_needed = ipc - len(state.reps)
        strategy2_done = False
        if state.outliers.size >= k_needed:
            try:
                cluster_outliers(state, k_needed, rng)
                strategy2_done = True
            except InsufficientOutliers:
                strategy2_done = False
        if not strategy2_done:
            state.worklist = [
                cid for cid in sorted(state.clusters)
                if state.clusters[cid].size > 2 * min_cluster_size
                and cid not in state.unsplittable
            ]
            while len(state.reps) < ipc:
                if not state.worklist:
                    raise CannotReachIPC(
                        f"all strategies exhausted at |S|={len(state.reps)} < {ipc}",
                        diagnostics=_diagnostics(state, ipc, min_cluster_size),
                    )
                mother = state.pop_largest()
                forced_split(state, mother, min_cluster_size, min_samples)
                assert state.transitions <= budget, (
                    "post-processing exceeded its step budget"
                )

    return _finalize(list(state.reps.values()), ipc)


def _finalize(entries: list[RepresentativeEntry], ipc: int) -> list[RepresentativeEntry]:
    assert len(entries) == ipc, f"expected {ipc} entries, got {len(entries)}"
    rows = [e.row for e in entries]
    assert len(set(rows)) == ipc, "duplicate representative rows"
    return sorted(
        entries,
        key=lambda e: (-e.source_cluster_size, _PROVENANCE_RANK[e.provenance], e.row),
    )


def _diagnostics(state: WorkState, ipc: int, min_cluster_size: int) -> dict:
    return {
        "ipc": ipc,
        "selected": len(state.reps),
        "min_cluster_size": min_cluster_size,
        "cluster_sizes": sorted((int(m.size) for m in state.clusters.values()), reverse=True),
        "n_outliers": int(state.outliers.size),
        "unsplittable": sorted(state.unsplittable),
    }


def provenance_fractions(entries) -> dict[str, float]:
    """Fraction of each provenance among the entries; values sum to 1."""
    total = len(entries)
    counts = {p.value: 0 for p in Provenance}
    for e in entries:
        counts[e.provenance.value] += 1
    return {k: v / total for k, v in counts.items()}


def source_report(grid_sets) -> list[dict]:
    """Provenance proportions over a (grid value -> entries) sweep.

    ``grid_sets`` is an iterable of (grid_value, entries) pairs; rows come
    back sorted by grid value.
    """
    rows = []
    for value, entries in sorted(grid_sets, key=lambda kv: kv[0]):
        row = {"min_cluster_size": value}
        row.update(provenance_fractions(entries))
        rows.append(row)
    return rows
