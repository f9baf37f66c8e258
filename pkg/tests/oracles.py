"""Independent brute-force oracles used to freeze expected values.

Everything here is deliberately naive (quadratic/cubic scans, recursion,
dict-based trees) and shares no code path with the package implementations
it checks.
"""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np


def naive_core_distances(X, min_samples):
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    out = np.empty(n)
    k = min(min_samples, n - 1)
    for i in range(n):
        dists = sorted(
            math.dist(X[i], X[j]) for j in range(n) if j != i
        )
        out[i] = dists[k - 1]
    return out


def naive_mutual_reachability(X, min_samples):
    X = np.asarray(X, dtype=np.float64)
    core = naive_core_distances(X, min_samples)
    n = len(X)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            D[i, j] = max(core[i], core[j], math.dist(X[i], X[j]))
    return D


def naive_single_linkage(D):
    """O(n^3) agglomerative single linkage on a distance matrix.

    Returns merges as (height, frozenset_a, frozenset_b) in merge order.
    """
    n = D.shape[0]
    clusters: dict[int, frozenset[int]] = {i: frozenset([i]) for i in range(n)}
    merges = []
    while len(clusters) > 1:
        ids = sorted(clusters)
        best = None
        for a, b in combinations(ids, 2):
            h = min(D[i, j] for i in clusters[a] for j in clusters[b])
            if best is None or h < best[0]:
                best = (h, a, b)
        h, a, b = best
        merges.append((h, clusters[a], clusters[b]))
        clusters[a] = clusters[a] | clusters[b]
        del clusters[b]
    return merges


def exhaustive_mst_weight(D):
    """Minimum spanning-tree weight by enumerating all spanning trees (n <= 7)."""
    n = D.shape[0]
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    best = math.inf
    for subset in combinations(edges, n - 1):
        parent = list(range(n))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        ok = True
        for u, v in subset:
            ru, rv = find(u), find(v)
            if ru == rv:
                ok = False
                break
            parent[ru] = rv
        if ok:
            best = min(best, sum(D[u, v] for u, v in subset))
    return best


class _Node:
    def __init__(self, members, height, children):
        self.members = members      # frozenset of points
        self.height = height        # merge distance creating this node
        self.children = children    # [] for leaves


def _tree_from_merges(merges, n):
    nodes = {i: _Node(frozenset([i]), 0.0, []) for i in range(n)}
    lookup = {frozenset([i]): i for i in range(n)}
    next_id = n
    for h, a, b in merges:
        na, nb = nodes[lookup[a]], nodes[lookup[b]]
        node = _Node(a | b, h, [na, nb])
        nodes[next_id] = node
        lookup[a | b] = next_id
        next_id += 1
    return nodes[next_id - 1]


def oracle_hdbscan(X, min_cluster_size, min_samples):
    """Recursive reimplementation of condensation + excess-of-mass selection.

    Returns (partition, outliers): partition is a set of frozensets of row
    indices (cluster ids abstracted away), outliers a frozenset.
    """
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    D = naive_mutual_reachability(X, min_samples)
    root = _tree_from_merges(naive_single_linkage(D), n)

    # condensed cluster: dict with points -> fall-out lambda, children clusters
    def condense(node, birth):
        cluster = {"birth": birth, "falls": {}, "children": []}
        current = node
        while True:
            if not current.children:
                cluster["falls"][next(iter(current.members))] = math.inf
                return cluster
            lam = 1.0 / current.height if current.height > 0 else math.inf
            left, right = current.children
            big_l = len(left.members) >= min_cluster_size
            big_r = len(right.members) >= min_cluster_size
            if big_l and big_r:
                cluster["children"] = [condense(left, lam), condense(right, lam)]
                return cluster
            if not big_l and not big_r:
                for p in current.members:
                    cluster["falls"][p] = lam
                return cluster
            small, big = (left, right) if not big_l else (right, left)
            for p in small.members:
                cluster["falls"][p] = lam
            current = big

    condensed = condense(root, 0.0)

    def stability(c):
        s = sum(lam - c["birth"] for lam in c["falls"].values())
        s += sum(len(_points(ch)) * (ch["birth"] - c["birth"]) for ch in c["children"])
        return s

    def _points(c):
        pts = set(c["falls"])
        for ch in c["children"]:
            pts |= _points(ch)
        return pts

    # bottom-up EOM over non-root clusters
    def select(c, is_root):
        if not c["children"]:
            if is_root:
                return [], 0.0
            return [c], stability(c)
        picked, total = [], 0.0
        for ch in c["children"]:
            p, s = select(ch, False)
            picked.extend(p)
            total += s
        if is_root:
            return picked, total
        own = stability(c)
        if own >= total:
            return [c], own
        return picked, total

    chosen, _ = select(condensed, True)

    if not condensed["children"] and not chosen:
        # root-only tree: adaptive single-cluster rule with the largest
        # multiplicative gap in sorted fall-out lambdas
        falls = condensed["falls"]
        if len(falls) >= min_cluster_size:
            items = sorted(falls.items(), key=lambda kv: kv[1])
            lams = [lam for _, lam in items]
            if all(l == lams[0] for l in lams):
                members = frozenset(falls)
            else:
                ratios = []
                for i in range(len(lams) - 1):
                    if lams[i + 1] == lams[i]:
                        ratios.append(1.0)
                    elif math.isinf(lams[i + 1]):
                        ratios.append(math.inf)
                    else:
                        ratios.append(lams[i + 1] / lams[i])
                cut = max(range(len(ratios)), key=lambda i: (ratios[i], -i))
                members = frozenset(p for p, _ in items[cut + 1 :])
            if len(members) >= min_cluster_size:
                partition = {members}
                outliers = frozenset(range(n)) - members
                return partition, outliers
        return set(), frozenset(range(n))

    partition = {frozenset(_points(c)) for c in chosen}
    covered = set().union(*partition) if partition else set()
    return partition, frozenset(range(n)) - covered


def enumerate_min_two_partition_inertia(X):
    """Minimum 2-partition inertia by enumerating all nonempty bipartitions."""
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    best = math.inf
    for mask in range(1, 2 ** (n - 1)):
        a = [i for i in range(n) if (mask >> i) & 1]
        b = [i for i in range(n) if not (mask >> i) & 1]
        if not a or not b:
            continue
        inertia = 0.0
        for side in (a, b):
            mu = X[side].mean(axis=0)
            inertia += float(np.sum((X[side] - mu) ** 2))
        best = min(best, inertia)
    return best


def sign_test_p(wins, losses):
    """One-sided exact binomial sign test p-value (ties excluded upstream)."""
    m = wins + losses
    return sum(math.comb(m, k) for k in range(wins, m + 1)) / 2**m
