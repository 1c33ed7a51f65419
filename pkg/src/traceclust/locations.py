"""Location context descriptors, cosine dissimilarity, and location grouping.

Each building active in a period gets a context descriptor: the k-by-l
association table of its own flows under the globally fitted cluster
assignments, with the same cluster ordering everywhere. Buildings are then
compared by cosine distance between descriptors flattened to vectors, and
grouped two ways: agglomerative hierarchical clustering of the dissimilarity
matrix, and maximal cliques of the graph whose edges join buildings with
dissimilarity strictly below a threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .cocluster import CoclusterModel, association_matrix
from .matrix import ContingencyMatrix, JointDistribution, scale_matrix

LINKAGES = ("average", "complete", "single")


class InactiveBuildingError(ValueError):
    """The building handled no interactions in the period."""


@dataclass
class ContextDescriptor:
    building: str
    table: np.ndarray  # k x l, sums to 1


@dataclass
class DissimilarityMatrix:
    buildings: list[str]
    values: np.ndarray  # L x L, symmetric, zero diagonal

    def restrict(self, subset: Sequence[str]) -> "DissimilarityMatrix":
        index = {b: i for i, b in enumerate(self.buildings)}
        idx = np.array([index[b] for b in subset], dtype=np.int64)
        return DissimilarityMatrix(list(subset), self.values[np.ix_(idx, idx)])


@dataclass
class ThresholdGraph:
    buildings: list[str]
    edges: list[tuple[str, str]]
    theta: float

    @property
    def edge_density(self) -> float:
        n = len(self.buildings)
        possible = n * (n - 1) // 2
        return len(self.edges) / possible if possible else 0.0

    def adjacency(self) -> dict[str, set[str]]:
        adj: dict[str, set[str]] = {b: set() for b in self.buildings}
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return adj

    def isolated_nodes(self) -> list[str]:
        adj = self.adjacency()
        return [b for b in self.buildings if not adj[b]]


def context_descriptor(building: str, p_loc: JointDistribution,
                       model: CoclusterModel) -> ContextDescriptor:
    """Association table of one building's joint distribution under the
    global model's fixed assignments."""
    return ContextDescriptor(building, association_matrix(p_loc, model))


def build_descriptors(by_building: Mapping[str, ContingencyMatrix],
                      model: CoclusterModel) -> tuple[list[ContextDescriptor], list[str]]:
    """Descriptors for all active buildings, in sorted building order.

    Buildings with no interactions are excluded and returned separately.
    """
    descriptors = []
    inactive = []
    for building in sorted(by_building):
        pruned, _, _ = by_building[building].pruned()
        if pruned.nnz == 0:
            inactive.append(building)
            continue
        descriptors.append(context_descriptor(building, scale_matrix(pruned), model))
    return descriptors, inactive


def cosine_dissimilarity(a: np.ndarray, b: np.ndarray) -> float:
    """1 - cosine of the angle between the two matrices read as vectors.

    Both inputs must be non-negative with nonzero norm, so the result lies in
    [0, 1]; identical inputs give exactly 0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("negative entries")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0 or norm_b == 0:
        raise ValueError("zero-norm input")
    if np.array_equal(a, b):
        return 0.0
    cos = float(np.dot(a.ravel(), b.ravel()) / (norm_a * norm_b))
    return min(1.0, max(0.0, 1.0 - cos))


def dissimilarity_matrix(descriptors: Sequence[ContextDescriptor]) -> DissimilarityMatrix:
    """All pairwise cosine dissimilarities; exactly symmetric, zero diagonal."""
    if len(descriptors) < 2:
        raise ValueError("need at least 2 descriptors")
    n = len(descriptors)
    values = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = cosine_dissimilarity(descriptors[i].table, descriptors[j].table)
            values[i, j] = values[j, i] = d
    return DissimilarityMatrix([desc.building for desc in descriptors], values)


@dataclass(frozen=True)
class Merge:
    """One agglomeration step; nodes 0..L-1 are leaves, node L+i is the
    cluster created by merge i."""

    left: int
    right: int
    height: float
    size: int


@dataclass
class _Stat:
    total: float  # sum of leaf-pair distances between the two clusters
    high: float
    low: float


def _linkage_value(stat: _Stat, size_a: int, size_b: int, linkage: str) -> float:
    if linkage == "average":
        return stat.total / (size_a * size_b)
    if linkage == "complete":
        return stat.high
    return stat.low


def hierarchical_clusters(d: DissimilarityMatrix, n: int,
                          linkage: str = "average") -> tuple[list[list[str]], list[Merge]]:
    """Agglomerative clustering of the precomputed dissimilarity matrix.

    Merges the closest pair of clusters (ties to the smallest node-id pair)
    until one remains, recording every merge; the returned partition is the
    state at `n` clusters, each cluster listing building ids in matrix order,
    clusters ordered by their first building.
    """
    size = len(d.buildings)
    if not 1 <= n <= size:
        raise ValueError(f"cluster count {n} outside [1, {size}]")
    if linkage not in LINKAGES:
        raise ValueError(f"unknown linkage {linkage!r}")

    members: dict[int, list[int]] = {i: [i] for i in range(size)}
    stats: dict[tuple[int, int], _Stat] = {}
    for i in range(size):
        for j in range(i + 1, size):
            v = float(d.values[i, j])
            stats[(i, j)] = _Stat(v, v, v)

    snapshot: list[list[int]] | None = [sorted(m) for m in members.values()] \
        if len(members) == n else None
    merges: list[Merge] = []
    next_id = size
    while len(members) > 1:
        ids = sorted(members)
        best_pair = None
        best_value = None
        for ai, a in enumerate(ids):
            for b in ids[ai + 1:]:
                value = _linkage_value(stats[(a, b)], len(members[a]),
                                       len(members[b]), linkage)
                if best_value is None or value < best_value:
                    best_pair, best_value = (a, b), value
        a, b = best_pair
        merged = members.pop(a) + members.pop(b)
        merges.append(Merge(a, b, best_value, len(merged)))
        for other in members:
            key_a = (min(a, other), max(a, other))
            key_b = (min(b, other), max(b, other))
            sa, sb = stats.pop(key_a), stats.pop(key_b)
            stats[(other, next_id)] = _Stat(sa.total + sb.total,
                                            max(sa.high, sb.high),
                                            min(sa.low, sb.low))
        members[next_id] = merged
        next_id += 1
        if len(members) == n:
            snapshot = [sorted(m) for m in members.values()]

    clusters = sorted(snapshot, key=lambda m: m[0])
    return [[d.buildings[i] for i in cluster] for cluster in clusters], merges


def average_dissimilarity(d: DissimilarityMatrix) -> dict[str, float]:
    """Per building, the mean dissimilarity to all other buildings."""
    size = len(d.buildings)
    if size < 2:
        raise ValueError("need at least 2 buildings")
    means = (d.values.sum(axis=1)) / (size - 1)  # diagonal is zero
    return {building: float(means[i]) for i, building in enumerate(d.buildings)}


def threshold_graph(d: DissimilarityMatrix, theta: float) -> ThresholdGraph:
    """Graph with an edge wherever dissimilarity is strictly below theta."""
    if not 0 < theta <= 1:
        raise ValueError(f"theta {theta} outside (0, 1]")
    edges = []
    for i in range(len(d.buildings)):
        for j in range(i + 1, len(d.buildings)):
            if d.values[i, j] < theta:
                edges.append((d.buildings[i], d.buildings[j]))
    return ThresholdGraph(list(d.buildings), edges, theta)


def maximal_cliques(g: ThresholdGraph, min_size: int = 3) -> list[list[str]]:
    """All maximal cliques with at least `min_size` nodes.

    Exact enumeration (recursive expansion with a pivot); each clique is
    sorted internally, the list by size descending then lexicographically.
    """
    if min_size < 1:
        raise ValueError("min_size must be >= 1")
    index = {b: i for i, b in enumerate(g.buildings)}
    adj: list[set[int]] = [set() for _ in g.buildings]
    for a, b in g.edges:
        adj[index[a]].add(index[b])
        adj[index[b]].add(index[a])

    found: list[list[int]] = []

    def expand(clique: list[int], candidates: set[int], excluded: set[int]) -> None:
        if not candidates and not excluded:
            found.append(sorted(clique))
            return
        pivot = max(candidates | excluded, key=lambda u: (len(adj[u] & candidates), -u))
        for v in sorted(candidates - adj[pivot]):
            expand(clique + [v], candidates & adj[v], excluded & adj[v])
            candidates.remove(v)
            excluded.add(v)

    expand([], set(range(len(g.buildings))), set())
    cliques = [[g.buildings[i] for i in clique] for clique in found
               if len(clique) >= min_size]
    cliques.sort(key=lambda c: (-len(c), c))
    return cliques


def dissimilarity_histogram(d: DissimilarityMatrix,
                            bin_width: float = 0.02) -> list[tuple[float, int]]:
    """Counts of pairwise dissimilarities in fixed-width bins over [0, 1]."""
    n_bins = int(round(1.0 / bin_width))
    counts = [0] * n_bins
    size = len(d.buildings)
    for i in range(size):
        for j in range(i + 1, size):
            idx = min(int(d.values[i, j] / bin_width), n_bins - 1)
            counts[idx] += 1
    return [(round(b * bin_width, 10), counts[b]) for b in range(n_bins)]
