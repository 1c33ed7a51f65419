"""Shared helpers: random-but-valid inputs and brute-force oracles."""

import numpy as np

from traceclust.cocluster import CoclusterModel
from traceclust.locations import ThresholdGraph
from traceclust.matrix import JointDistribution


def random_joint(rng: np.random.Generator, n: int, m: int,
                 density: float = 0.7) -> JointDistribution:
    """A random normalized joint with every row/column carrying mass."""
    dense = rng.uniform(0.1, 1.0, size=(n, m)) * (rng.random((n, m)) < density)
    dense[np.arange(n), rng.integers(0, m, size=n)] = rng.uniform(0.1, 1.0, size=n)
    dense[rng.integers(0, n, size=m), np.arange(m)] = rng.uniform(0.1, 1.0, size=m)
    dense /= dense.sum()
    return JointDistribution.from_dense(dense)


def random_assignment(rng: np.random.Generator, n: int, groups: int) -> np.ndarray:
    """Uniform random assignment with no empty group."""
    assign = np.empty(n, dtype=np.int64)
    assign[rng.permutation(n)] = np.arange(n) % groups
    extra = rng.integers(0, groups, size=n)
    mix = rng.random(n) < 0.5
    candidate = np.where(mix, extra, assign)
    return candidate if len(set(candidate.tolist())) == groups else assign


def model_from_arrays(p: JointDistribution, k: int, l: int, ra: np.ndarray,
                      ca: np.ndarray) -> CoclusterModel:
    return CoclusterModel(
        k=k, l=l,
        row_assign={rid: int(c) for rid, c in zip(p.row_ids, ra)},
        col_assign={cid: int(c) for cid, c in zip(p.col_ids, ca)},
        tau=0, loss_history=[0.0], seed=0, restarts=1)


def clique_oracle(graph: ThresholdGraph, min_size: int) -> set[frozenset]:
    """All maximal cliques by enumerating every one of the 2^L subsets."""
    n = len(graph.buildings)
    index = {b: i for i, b in enumerate(graph.buildings)}
    masks = [0] * n
    for a, b in graph.edges:
        masks[index[a]] |= 1 << index[b]
        masks[index[b]] |= 1 << index[a]
    result = set()
    for s in range(1, 1 << n):
        nodes = [v for v in range(n) if s >> v & 1]
        if any((s & ~(1 << v)) & ~masks[v] for v in nodes):
            continue  # not a clique
        if any((masks[u] & s) == s for u in range(n) if not s >> u & 1):
            continue  # extensible, so not maximal
        if len(nodes) >= min_size:
            result.add(frozenset(graph.buildings[v] for v in nodes))
    return result


def hierarchy_oracle(values: np.ndarray, linkage: str) -> list[tuple[int, int, float]]:
    """Naive agglomeration trace: every linkage value recomputed from the
    original matrix over the member sets (no incremental updates)."""
    clusters = {i: [i] for i in range(values.shape[0])}
    merges = []
    next_id = values.shape[0]
    while len(clusters) > 1:
        best = None
        for a in sorted(clusters):
            for b in sorted(clusters):
                if b <= a:
                    continue
                pts = [values[i, j] for i in clusters[a] for j in clusters[b]]
                val = {"average": lambda p: sum(p) / len(p),
                       "complete": max, "single": min}[linkage](pts)
                if best is None or val < best[0]:
                    best = (val, a, b)
        val, a, b = best
        clusters[next_id] = clusters.pop(a) + clusters.pop(b)
        merges.append((a, b, val))
        next_id += 1
    return merges
