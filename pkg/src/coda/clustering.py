"""Density-based clustering built from first principles.

The chain is: per-point core distances -> mutual-reachability semantics ->
minimum spanning tree -> single-linkage hierarchy -> condensed tree (splits
that would create a child smaller than min_cluster_size are folded into the
parent shedding noise) -> excess-of-mass flat extraction with lambda-ratio
membership probabilities. Everything is exact and deterministic: identical
input bytes give identical results.

Degenerate hierarchies where the root never truly splits are handled by an
adaptive single-cluster rule: the root is selected when it holds at least
min_cluster_size points, with membership cut at the largest multiplicative
gap in the sorted fall-out lambdas (no gap means every point is a member,
which covers all-coincident inputs).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import TooFewPoints, ValidationError

OUTLIER = -1

_CHUNK = 512


@dataclass(frozen=True)
class ClusterInfo:
    cluster_id: int
    members: np.ndarray  # ascending row indices
    size: int


@dataclass(frozen=True)
class ClusterParams:
    min_cluster_size: int
    min_samples: int | None


@dataclass(frozen=True)
class ClusterResult:
    labels: np.ndarray       # (n,) values in {0..M-1} or OUTLIER
    membership: np.ndarray   # (n,) in [0,1], 0 for outliers
    clusters: list[ClusterInfo]
    params: ClusterParams

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    @property
    def outlier_rows(self) -> np.ndarray:
        return np.flatnonzero(self.labels == OUTLIER)


def core_distances(X, min_samples: int) -> np.ndarray:
    """Distance from each point to its min_samples-th nearest neighbor (self excluded).

    When min_samples == n the neighbor rank is clamped to n-1, mirroring the
    reference library; n < min_samples raises TooFewPoints.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if min_samples < 1:
        raise ValidationError(f"min_samples must be >= 1, got {min_samples}")
    if n < max(min_samples, 2):
        raise TooFewPoints(f"{n} points cannot support min_samples={min_samples}")
    k = min(min_samples, n - 1)
    sq = np.einsum("ij,ij->i", X, X)
    out = np.empty(n)
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        block = _distance_block(X, sq, start, stop)
        # the self-distance 0 occupies rank 0, so partition index k is the
        # k-th neighbor excluding self
        out[start:stop] = np.partition(block, k, axis=1)[:, k]
    return out


def _distance_block(X, sq, start, stop) -> np.ndarray:
    d2 = sq[start:stop, None] + sq[None, :] - 2.0 * (X[start:stop] @ X.T)
    np.maximum(d2, 0.0, out=d2)
    return np.sqrt(d2)


def mutual_reachability(X, min_samples: int) -> np.ndarray:
    """Full pairwise d_mreach(a,b) = max(core(a), core(b), ||a-b||) matrix."""
    X = np.asarray(X, dtype=np.float64)
    core = core_distances(X, min_samples)
    sq = np.einsum("ij,ij->i", X, X)
    dist = _distance_block(X, sq, 0, X.shape[0])
    return np.maximum(dist, np.maximum(core[:, None], core[None, :]))


def build_mst(distances) -> list[tuple[int, int, float]]:
    """Minimum spanning tree of a dense symmetric distance matrix.

    Returns n-1 edges sorted by (weight, min index, max index); equal-weight
    alternatives are resolved toward the lexicographically smallest pair.
    """
    D = np.asarray(distances, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {D.shape}")
    return _prim(lambda i: D[i], D.shape[0])


def _mst_from_points(X: np.ndarray, core: np.ndarray) -> list[tuple[int, int, float]]:
    # mutual-reachability rows computed on the fly: O(n) memory for any n
    sq = np.einsum("ij,ij->i", X, X)

    def row(i: int) -> np.ndarray:
        d2 = sq + sq[i] - 2.0 * (X @ X[i])
        np.maximum(d2, 0.0, out=d2)
        d = np.sqrt(d2)
        np.maximum(d, core, out=d)
        np.maximum(d, core[i], out=d)
        return d

    return _prim(row, X.shape[0])


def _prim(row_fn, n: int) -> list[tuple[int, int, float]]:
    if n < 1:
        raise TooFewPoints("empty input")
    if n == 1:
        return []
    best_w = np.full(n, np.inf)
    best_src = np.full(n, -1, dtype=np.int64)
    in_tree = np.zeros(n, dtype=bool)
    edges: list[tuple[int, int, float]] = []
    current = 0
    in_tree[0] = True
    best_w[0] = np.inf  # sentinel: in-tree vertices never selected
    for _ in range(n - 1):
        d = row_fn(current)
        closer = (d < best_w) & ~in_tree
        ties = (d == best_w) & ~in_tree & (best_src >= 0)
        best_w[closer] = d[closer]
        best_src[closer] = current
        if ties.any():
            for v in np.flatnonzero(ties):
                if _edge_key(current, v) < _edge_key(int(best_src[v]), v):
                    best_src[v] = current
        masked = np.where(in_tree, np.inf, best_w)
        w_min = masked.min()
        pool = np.flatnonzero(masked == w_min)
        if pool.size > 1:
            nxt = min(pool, key=lambda v: _edge_key(int(best_src[v]), int(v)))
        else:
            nxt = pool[0]
        nxt = int(nxt)
        edges.append((int(best_src[nxt]), nxt, float(best_w[nxt])))
        in_tree[nxt] = True
        current = nxt
    edges.sort(key=lambda e: (e[2], min(e[0], e[1]), max(e[0], e[1])))
    return edges


def _edge_key(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


def single_linkage(edges, n: int) -> np.ndarray:
    """Dendrogram from MST edges: rows (left, right, height, size), new node n+k."""
    if len(edges) != n - 1:
        raise ValidationError(f"need {n - 1} edges for {n} points, got {len(edges)}")
    parent = np.arange(n, dtype=np.int64)
    comp_node = np.arange(n, dtype=np.int64)
    comp_size = np.ones(n, dtype=np.int64)

    def find(a: int) -> int:
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    Z = np.empty((n - 1, 4))
    for k, (u, v, w) in enumerate(sorted(edges, key=lambda e: (e[2], min(e[0], e[1]), max(e[0], e[1])))):
        ru, rv = find(int(u)), find(int(v))
        if ru == rv:
            raise ValidationError("edge list is not a spanning tree")
        Z[k] = (comp_node[ru], comp_node[rv], w, comp_size[ru] + comp_size[rv])
        parent[rv] = ru
        comp_node[ru] = n + k
        comp_size[ru] += comp_size[rv]
    return Z


def _condense(Z: np.ndarray, n: int, min_cluster_size: int):
    """Fold sub-min_cluster_size splits into noise shedding.

    Returns parallel arrays (parent, child, lam, size); child < n denotes a
    point, child >= n a condensed cluster; the root cluster carries id n.
    """
    n_nodes = 2 * n - 1
    root = n_nodes - 1
    children = np.empty((n - 1, 2), dtype=np.int64)
    children[:, 0] = Z[:, 0]
    children[:, 1] = Z[:, 1]
    sizes = Z[:, 3].astype(np.int64)

    def node_size(node: int) -> int:
        return 1 if node < n else int(sizes[node - n])

    def leaves_under(node: int):
        stack = [node]
        while stack:
            cur = stack.pop()
            if cur < n:
                yield cur
            else:
                stack.extend(children[cur - n])

    relabel = np.full(n_nodes, -1, dtype=np.int64)
    relabel[root] = n
    next_label = n + 1
    ignore = np.zeros(n_nodes, dtype=bool)
    rows_parent: list[int] = []
    rows_child: list[int] = []
    rows_lam: list[float] = []
    rows_size: list[int] = []

    def shed(parent_label: int, node: int, lam: float) -> None:
        for leaf in leaves_under(node):
            rows_parent.append(parent_label)
            rows_child.append(int(leaf))
            rows_lam.append(lam)
            rows_size.append(1)
        stack = [node]
        while stack:
            cur = stack.pop()
            ignore[cur] = True
            if cur >= n:
                stack.extend(children[cur - n])

    queue = deque([root])
    while queue:
        node = queue.popleft()
        if node < n or ignore[node]:
            continue
        label = int(relabel[node])
        left, right = (int(c) for c in children[node - n])
        dist = Z[node - n, 2]
        lam = 1.0 / dist if dist > 0.0 else np.inf
        lc, rc = node_size(left), node_size(right)
        if lc >= min_cluster_size and rc >= min_cluster_size:
            for side, count in ((left, lc), (right, rc)):
                relabel[side] = next_label
                rows_parent.append(label)
                rows_child.append(next_label)
                rows_lam.append(lam)
                rows_size.append(count)
                next_label += 1
                queue.append(side)
        elif lc < min_cluster_size and rc < min_cluster_size:
            shed(label, left, lam)
            shed(label, right, lam)
        elif lc < min_cluster_size:
            relabel[right] = label
            shed(label, left, lam)
            queue.append(right)
        else:
            relabel[left] = label
            shed(label, right, lam)
            queue.append(left)

    return (
        np.asarray(rows_parent, dtype=np.int64),
        np.asarray(rows_child, dtype=np.int64),
        np.asarray(rows_lam, dtype=np.float64),
        np.asarray(rows_size, dtype=np.int64),
    )


def _stability(parent, child, lam, size, n: int) -> dict[int, float]:
    # excess of mass: sum of (lambda - birth(parent)) * child_size per cluster
    birth = {int(n): 0.0}
    for c, l in zip(child, lam):
        if c >= n:
            birth[int(c)] = float(l)
    stab = {cid: 0.0 for cid in birth}
    for p, l, s in zip(parent, lam, size):
        stab[int(p)] += (float(l) - birth[int(p)]) * int(s)
    return stab


def condense_and_select(
    mst_edges,
    min_cluster_size: int,
    *,
    n_points: int | None = None,
    min_samples: int | None = None,
) -> ClusterResult:
    """Condense the single-linkage hierarchy and extract flat clusters.

    Selection is excess-of-mass over non-root clusters; membership of point p
    in its cluster c is min(lambda_p, lambda_max(c)) / lambda_max(c). M=0 is
    a valid outcome (all points outliers), reported rather than raised.
    """
    n = n_points if n_points is not None else len(mst_edges) + 1
    if n == 1:
        return _empty_result(1, ClusterParams(min_cluster_size, min_samples))
    return select_from_linkage(
        single_linkage(mst_edges, n), n, min_cluster_size, min_samples
    )


def select_from_linkage(
    Z: np.ndarray,
    n: int,
    min_cluster_size: int,
    min_samples: int | None = None,
) -> ClusterResult:
    """Flat extraction from a precomputed dendrogram.

    The dendrogram does not depend on min_cluster_size, so callers sweeping
    granularities (the relaxation ladder in particular) can reuse it.
    """
    if min_cluster_size < 2:
        raise ValidationError(f"min_cluster_size must be >= 2, got {min_cluster_size}")
    params = ClusterParams(min_cluster_size, min_samples)
    parent, child, lam, size = _condense(Z, n, min_cluster_size)

    point_rows = child < n
    point_parent = {int(c): int(p) for c, p in zip(child[point_rows], parent[point_rows])}
    point_lam = {int(c): float(l) for c, l in zip(child[point_rows], lam[point_rows])}

    cluster_rows = ~point_rows
    cluster_children: dict[int, list[int]] = {}
    cluster_parent: dict[int, int] = {}
    for p, c in zip(parent[cluster_rows], child[cluster_rows]):
        cluster_children.setdefault(int(p), []).append(int(c))
        cluster_parent[int(c)] = int(p)

    stab = _stability(parent, child, lam, size, n)
    all_clusters = sorted(stab)

    if len(all_clusters) == 1:
        chosen = _select_root_adaptive(point_lam, n, min_cluster_size)
        selected = {n: chosen} if chosen is not None else {}
    else:
        selected_ids = _select_eom(all_clusters, cluster_children, stab, root=n)
        selected = {cid: None for cid in selected_ids}

    return _label_points(
        n, selected, point_parent, point_lam, cluster_parent, params
    )


def _select_eom(all_clusters, cluster_children, stab, root: int) -> list[int]:
    work = dict(stab)
    candidates = [c for c in sorted(all_clusters, reverse=True) if c != root]
    is_selected = {c: True for c in candidates}
    for node in candidates:
        kids = cluster_children.get(node, [])
        kid_total = sum(work[k] for k in kids)
        if kid_total > work[node]:
            is_selected[node] = False
            work[node] = kid_total
        else:
            stack = list(kids)
            while stack:
                d = stack.pop()
                is_selected[d] = False
                stack.extend(cluster_children.get(d, []))
    return sorted(c for c, keep in is_selected.items() if keep)


def _select_root_adaptive(point_lam, n: int, min_cluster_size: int):
    """Pick the root's members when the hierarchy never truly splits.

    Returns the member row array, or None when no valid single cluster
    exists. The cut sits at the largest multiplicative gap of the sorted
    fall-out lambdas; equal lambdas everywhere (e.g. coincident inputs)
    admit every point.
    """
    if len(point_lam) < min_cluster_size:
        return None
    rows = np.fromiter(point_lam.keys(), dtype=np.int64)
    lams = np.fromiter(point_lam.values(), dtype=np.float64)
    order = np.argsort(lams, kind="stable")
    s = lams[order]
    ratios = np.ones(len(s) - 1)
    changed = s[1:] != s[:-1]  # lambdas are positive; equal-to-equal stays ratio 1
    with np.errstate(divide="ignore", over="ignore"):
        ratios[changed] = (s[1:] / s[:-1])[changed]
    if len(ratios) == 0 or np.all(ratios == 1.0):
        members = rows
    else:
        cut = int(np.argmax(ratios))
        members = rows[order[cut + 1 :]]
    if members.size < min_cluster_size:
        return None
    return np.sort(members)


def _label_points(n, selected, point_parent, point_lam, cluster_parent, params) -> ClusterResult:
    if not selected:
        return _empty_result(n, params)
    cluster_ids = sorted(selected)
    id_map = {cid: i for i, cid in enumerate(cluster_ids)}
    labels = np.full(n, OUTLIER, dtype=np.int64)

    explicit = {cid: m for cid, m in selected.items() if m is not None}
    if explicit:
        # adaptive single-cluster path: membership decided by the gap rule
        for cid, members in explicit.items():
            labels[members] = id_map[cid]
    else:
        ancestor_cache: dict[int, int | None] = {}

        def nearest_selected(cluster: int):
            seen = []
            cur: int | None = cluster
            while cur is not None and cur not in ancestor_cache:
                if cur in selected:
                    ancestor_cache[cur] = cur
                    break
                seen.append(cur)
                cur = cluster_parent.get(cur)
            resolved = ancestor_cache.get(cur) if cur is not None else None
            for node in seen:
                ancestor_cache[node] = resolved
            return resolved

        for p, parent_cluster in point_parent.items():
            sel = nearest_selected(parent_cluster)
            if sel is not None:
                labels[p] = id_map[sel]

    membership = np.zeros(n)
    clusters: list[ClusterInfo] = []
    for cid in cluster_ids:
        idx = id_map[cid]
        members = np.flatnonzero(labels == idx)
        lam_members = np.array([point_lam[int(p)] for p in members])
        finite = lam_members[np.isfinite(lam_members)]
        lam_max = float(finite.max()) if finite.size else 0.0
        for p, lam_p in zip(members, lam_members):
            if not np.isfinite(lam_p) or lam_max <= 0.0:
                membership[p] = 1.0
            else:
                membership[p] = min(lam_p, lam_max) / lam_max
        clusters.append(ClusterInfo(idx, members, int(members.size)))
    return ClusterResult(labels, membership, clusters, params)


def _empty_result(n: int, params: ClusterParams) -> ClusterResult:
    return ClusterResult(
        np.full(n, OUTLIER, dtype=np.int64), np.zeros(n), [], params
    )


def linkage_for_points(X, min_samples: int) -> np.ndarray:
    """Single-linkage dendrogram over mutual-reachability distances."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < max(min_samples, 2):
        raise TooFewPoints(f"{n} points cannot support min_samples={min_samples}")
    core = core_distances(X, min_samples)
    return single_linkage(_mst_from_points(X, core), n)


def hdbscan(X, min_cluster_size: int, min_samples: int) -> ClusterResult:
    """Full pipeline: core distances, mutual reachability, MST, condensation, selection."""
    X = np.asarray(X, dtype=np.float64)
    Z = linkage_for_points(X, min_samples)
    return select_from_linkage(Z, X.shape[0], min_cluster_size, min_samples)


def cluster_report(result: ClusterResult) -> dict:
    """JSON-ready per-class summary consumed by the provenance report."""
    return {
        "n_clusters": result.n_clusters,
        "cluster_sizes": [c.size for c in result.clusters],
        "n_outliers": int(result.outlier_rows.size),
        "params": {
            "min_cluster_size": result.params.min_cluster_size,
            "min_samples": result.params.min_samples,
        },
        "outlier_sentinel": OUTLIER,
    }
