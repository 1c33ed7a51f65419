"""Information-theoretic co-clustering of a joint user-domain distribution.

Rows and columns are partitioned simultaneously so that the clustered table
preserves as much of the original mutual information as possible; the
objective is the loss I(X;Y) - I(row-clusters; column-clusters), which the
alternating row/column steps never increase. Each row step reassigns every
row to the cluster whose prototype distribution is closest in relative
entropy, using prototypes built from the previous half-step; the column step
is symmetric. Per half-step the work is O(nnz * clusters) thanks to the
factorization of the relative-entropy argmin through per-cluster mass sums.

Assignments are deterministic for a given (input, k, l, config): ties in the
argmin go to the lowest cluster index, restarts use consecutive seeds, and
the best final loss wins with ties going to the lowest restart seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .matrix import JointDistribution
from .provenance import load_json_artifact, write_json_artifact


class EmptyClusterError(ValueError):
    """A cluster index has no assigned rows/columns."""


@dataclass
class CoclusterConfig:
    tau_max: int = 20
    tol: float = 1e-9
    restarts: int = 8
    seed: int = 0
    # single-move polish after the alternating phase converges; each sweep
    # applies strictly loss-decreasing row/column moves (0 disables)
    refine_sweeps: int = 50


@dataclass
class CoclusterModel:
    """Fitted row/column partition plus the fit trace that produced it."""

    k: int
    l: int
    row_assign: dict[str, int]
    col_assign: dict[str, int]
    tau: int
    loss_history: list[float]
    seed: int
    restarts: int

    @property
    def final_loss(self) -> float:
        return self.loss_history[-1]


@dataclass
class Prototypes:
    """Explicit cluster prototype distributions.

    row_given_cluster[c, y] is q(y | row cluster c), the column distribution a
    row is compared against in relative entropy; col_given_cluster is the
    symmetric l-by-n_rows table; cluster_joint is the k-by-l clustered mass.
    """

    row_given_cluster: np.ndarray
    col_given_cluster: np.ndarray
    cluster_joint: np.ndarray


def mutual_information(p: JointDistribution | np.ndarray) -> float:
    """I(X;Y) in nats, with 0 log 0 treated as 0."""
    if isinstance(p, JointDistribution):
        return float(np.sum(p.vals * (np.log(p.vals)
                                      - np.log(p.px[p.rows] * p.py[p.cols]))))
    dense = np.asarray(p, dtype=np.float64)
    total = float(dense.sum())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"distribution mass {total} != 1")
    if np.any(dense < 0):
        raise ValueError("negative probability")
    pr = dense.sum(axis=1)
    pc = dense.sum(axis=0)
    mask = dense > 0
    outer = pr[:, None] * pc[None, :]
    return float(np.sum(dense[mask] * (np.log(dense[mask]) - np.log(outer[mask]))))


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """Relative entropy sum(p log p/q); +inf iff p has mass where q has none."""
    p = np.asarray(p, dtype=np.float64).ravel()
    q = np.asarray(q, dtype=np.float64).ravel()
    if p.shape != q.shape:
        raise ValueError(f"dimension mismatch: {p.size} vs {q.size}")
    mask = p > 0
    if np.any(q[mask] == 0):
        return math.inf
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))


def _assignment_arrays(p: JointDistribution,
                       model: "CoclusterModel") -> tuple[np.ndarray, np.ndarray]:
    try:
        ra = np.array([model.row_assign[rid] for rid in p.row_ids], dtype=np.int64)
        ca = np.array([model.col_assign[cid] for cid in p.col_ids], dtype=np.int64)
    except KeyError as e:
        raise ValueError(f"id {e.args[0]!r} not covered by the model") from None
    if ra.size and (ra.min() < 0 or ra.max() >= model.k):
        raise ValueError("row cluster index out of range")
    if ca.size and (ca.min() < 0 or ca.max() >= model.l):
        raise ValueError("column cluster index out of range")
    return ra, ca


def association_matrix(p: JointDistribution, model: CoclusterModel) -> np.ndarray:
    """k-by-l association levels: summed joint probability per cluster pair."""
    ra, ca = _assignment_arrays(p, model)
    flat = np.bincount(ra[p.rows] * model.l + ca[p.cols], weights=p.vals,
                       minlength=model.k * model.l)
    return flat.reshape(model.k, model.l)


def build_prototypes(p: JointDistribution, model: CoclusterModel) -> Prototypes:
    """Explicit q distributions for the model's clusters over p.

    q(y | row cluster) couples the column clustering into the row prototypes:
    q(y|c) = p(y | cluster of y) * p(cluster of y | c). Raises
    EmptyClusterError when some cluster has no members.
    """
    ra, ca = _assignment_arrays(p, model)
    if np.any(np.bincount(ra, minlength=model.k) == 0) \
            or np.any(np.bincount(ca, minlength=model.l) == 0):
        raise EmptyClusterError("model has an empty cluster")
    joint = association_matrix(p, model)
    p_rowclust = joint.sum(axis=1)
    p_colclust = joint.sum(axis=0)
    y_given_clust = p.py / p_colclust[ca]
    x_given_clust = p.px / p_rowclust[ra]
    row_given = y_given_clust[None, :] * (joint[:, ca] / p_rowclust[:, None])
    col_given = x_given_clust[None, :] * (joint.T[:, ra] / p_colclust[:, None])
    return Prototypes(row_given, col_given, joint)


def loss(p: JointDistribution, model: CoclusterModel) -> float:
    """Mutual information lost by clustering: I(X;Y) - I(clustered table)."""
    return mutual_information(p) - _mi_dense(association_matrix(p, model))


def _mi_dense(a: np.ndarray) -> float:
    pr = a.sum(axis=1)
    pc = a.sum(axis=0)
    mask = a > 0
    outer = pr[:, None] * pc[None, :]
    return float(np.sum(a[mask] * (np.log(a[mask]) - np.log(outer[mask]))))


def _balanced_init(n: int, groups: int, rng: np.random.Generator) -> np.ndarray:
    assign = np.empty(n, dtype=np.int64)
    assign[rng.permutation(n)] = np.arange(n) % groups
    return assign


def _random_surjective_init(n: int, groups: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random assignment with every cluster anchored by one element."""
    assign = rng.integers(0, groups, size=n).astype(np.int64)
    anchors = rng.permutation(n)[:groups]
    assign[anchors] = rng.permutation(groups)
    return assign


def _half_step(rows: np.ndarray, cols: np.ndarray, vals: np.ndarray,
               marg: np.ndarray, other_marg: np.ndarray, assign: np.ndarray,
               other_assign: np.ndarray, k: int, l: int,
               n: int) -> tuple[np.ndarray, np.ndarray, bool]:
    """One reassignment pass for the `rows` side (call with sides swapped for
    columns). Returns (new assignment, k-by-l association, changed flag)."""
    # mass per (row, column-cluster); rows carry their own cluster next
    s = np.bincount(rows * l + other_assign[cols], weights=vals,
                    minlength=n * l).reshape(n, l)
    a = np.zeros((k, l))
    np.add.at(a, assign, s)
    p_clust = a.sum(axis=1)
    with np.errstate(divide="ignore"):
        log_a = np.log(a)
    log_cond = np.where(a > 0, log_a - np.log(p_clust)[:, None], 0.0)
    s_norm = s / marg[:, None]
    cost = -(s_norm @ log_cond.T)
    blocked = (s_norm > 0).astype(np.float64) @ (a == 0).T.astype(np.float64)
    cost[blocked > 0] = np.inf
    new_assign = np.argmin(cost, axis=1)

    counts = np.bincount(new_assign, minlength=k)
    if np.any(counts == 0):
        # repair: pull the worst-fitting row (largest relative entropy to its
        # prototype) out of a multi-member cluster into each empty one
        w = vals / marg[rows]
        own = np.bincount(rows, weights=w * np.log(w), minlength=n)
        p_oclust = np.bincount(other_assign, weights=other_marg, minlength=l)
        cond = np.bincount(rows, weights=w * (np.log(other_marg[cols])
                                              - np.log(p_oclust)[other_assign[cols]]),
                           minlength=n)
        kl = own - cond + cost[np.arange(n), new_assign]
        while True:
            counts = np.bincount(new_assign, minlength=k)
            empties = np.flatnonzero(counts == 0)
            if empties.size == 0:
                break
            candidates = np.where(counts[new_assign] >= 2, kl, -np.inf)
            mover = int(np.argmax(candidates))
            new_assign[mover] = int(empties[0])
            kl[mover] = -np.inf

    changed = bool(np.any(new_assign != assign))
    a = np.zeros((k, l))
    np.add.at(a, new_assign, s)
    return new_assign, a, changed


@dataclass
class _Fit:
    row_assign: np.ndarray
    col_assign: np.ndarray
    loss_history: list[float]
    tau: int
    seed: int

    @property
    def final_loss(self) -> float:
        return self.loss_history[-1]


def _entropy_term(v: np.ndarray) -> np.ndarray:
    """Elementwise v*log(v) with 0 at 0, tolerating tiny negative fp residue."""
    v = np.maximum(v, 0.0)
    out = np.zeros_like(v)
    mask = v > 0
    out[mask] = v[mask] * np.log(v[mask])
    return out


def _scalar_h(t: float) -> float:
    return t * math.log(t) if t > 0 else 0.0


def _refine_side(s: np.ndarray, assign: np.ndarray, a_table: np.ndarray,
                 counts: np.ndarray, groups: int) -> bool:
    """One first-variation sweep over one side: move each element to the
    cluster that most increases the clustered mutual information, applying
    only strict improvements. `a_table` and `counts` are updated in place;
    moves leave the other side's marginals of `a_table` unchanged, so the
    information gain of moving x from cluster `src` to `dst` reduces to
    cell-entropy and row-marginal-entropy differences over those two rows."""
    moved = False
    marg = s.sum(axis=1)
    for x in range(s.shape[0]):
        src = int(assign[x])
        if counts[src] <= 1:
            continue  # never empty a cluster
        sx = s[x]
        if marg[x] <= 0:
            continue
        r = a_table.sum(axis=1)
        h_src_old = float(_entropy_term(a_table[src]).sum())
        h_src_new = float(_entropy_term(a_table[src] - sx).sum())
        hr_src_old = _scalar_h(float(r[src]))
        hr_src_new = _scalar_h(max(float(r[src]) - float(marg[x]), 0.0))
        best_gain = 1e-12
        best_dst = -1
        for dst in range(groups):
            if dst == src:
                continue
            cell_part = (h_src_new - h_src_old
                         + float(_entropy_term(a_table[dst] + sx).sum())
                         - float(_entropy_term(a_table[dst]).sum()))
            marginal_part = (hr_src_new - hr_src_old
                             + _scalar_h(float(r[dst]) + float(marg[x]))
                             - _scalar_h(float(r[dst])))
            gain = cell_part - marginal_part
            if gain > best_gain:
                best_gain = gain
                best_dst = dst
        if best_dst >= 0:
            a_table[src] = np.maximum(a_table[src] - sx, 0.0)
            a_table[best_dst] += sx
            counts[src] -= 1
            counts[best_dst] += 1
            assign[x] = best_dst
            moved = True
    return moved


def _fit_once(p: JointDistribution, k: int, l: int, tau_max: int, tol: float,
              seed: int, refine_sweeps: int = 0, balanced: bool = True) -> _Fit:
    rng = np.random.default_rng(seed)
    n, m = p.shape
    init = _balanced_init if balanced else _random_surjective_init
    ra = init(n, k, rng)
    ca = init(m, l, rng)
    i_xy = mutual_information(p)

    flat = np.bincount(ra[p.rows] * l + ca[p.cols], weights=p.vals, minlength=k * l)
    history = [i_xy - _mi_dense(flat.reshape(k, l))]
    tau = 0
    for _ in range(tau_max):
        before = history[-1]
        ra, assoc, changed_r = _half_step(p.rows, p.cols, p.vals, p.px, p.py,
                                          ra, ca, k, l, n)
        history.append(i_xy - _mi_dense(assoc))
        ca, assoc_t, changed_c = _half_step(p.cols, p.rows, p.vals, p.py, p.px,
                                            ca, ra, l, k, m)
        history.append(i_xy - _mi_dense(assoc_t))
        tau += 1
        if not (changed_r or changed_c):
            break
        if before - history[-1] < tol:
            break

    for _ in range(refine_sweeps):
        s = np.bincount(p.rows * l + ca[p.cols], weights=p.vals,
                        minlength=n * l).reshape(n, l)
        a = np.zeros((k, l))
        np.add.at(a, ra, s)
        moved_r = _refine_side(s, ra, a, np.bincount(ra, minlength=k), k)
        t = np.bincount(p.cols * k + ra[p.rows], weights=p.vals,
                        minlength=m * k).reshape(m, k)
        b = np.zeros((l, k))
        np.add.at(b, ca, t)
        moved_c = _refine_side(t, ca, b, np.bincount(ca, minlength=l), l)
        if not (moved_r or moved_c):
            break
        flat = np.bincount(ra[p.rows] * l + ca[p.cols], weights=p.vals,
                           minlength=k * l)
        history.append(i_xy - _mi_dense(flat.reshape(k, l)))
    return _Fit(ra, ca, history, tau, seed)


def cocluster(p: JointDistribution, k: int, l: int,
              config: CoclusterConfig | None = None) -> CoclusterModel:
    """Fit a k-by-l co-clustering minimizing mutual-information loss.

    Runs `config.restarts` alternating-minimization fits from seeded balanced
    random initializations (restart i uses seed config.seed + i) and returns
    the one with the lowest final loss. After the alternating phase converges,
    single-move refinement sweeps apply any strictly loss-decreasing
    reassignment of one row or column at a time, which escapes the batch
    step's shallow local minima. The loss history holds the initial loss, the
    loss after every half-step, then one entry per refinement sweep; it is
    non-increasing throughout.
    """
    config = config or CoclusterConfig()
    n, m = p.shape
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside [1, {n}]")
    if not 1 <= l <= m:
        raise ValueError(f"l={l} outside [1, {m}]")
    if config.restarts < 1 or config.tau_max < 1:
        raise ValueError("restarts and tau_max must be >= 1")
    best: _Fit | None = None
    for i in range(config.restarts):
        # restart 0 starts balanced; later restarts start from seeded random
        # surjective assignments, which reach unbalanced optima far more often
        fit = _fit_once(p, k, l, config.tau_max, config.tol, config.seed + i,
                        config.refine_sweeps, balanced=(i == 0))
        if best is None or fit.final_loss < best.final_loss:
            best = fit
    return CoclusterModel(
        k=k, l=l,
        row_assign={rid: int(c) for rid, c in zip(p.row_ids, best.row_assign)},
        col_assign={cid: int(c) for cid, c in zip(p.col_ids, best.col_assign)},
        tau=best.tau, loss_history=[float(v) for v in best.loss_history],
        seed=best.seed, restarts=config.restarts)


def save_model(model: CoclusterModel, path: str | Path,
               config: dict[str, Any] | None = None,
               inputs: list[str | Path] | None = None) -> None:
    write_json_artifact(path, {
        "k": model.k,
        "l": model.l,
        "seed": model.seed,
        "restarts": model.restarts,
        "tau": model.tau,
        "loss_history": model.loss_history,
        "row_assign": model.row_assign,
        "col_assign": model.col_assign,
    }, config, inputs)


def load_model(path: str | Path) -> CoclusterModel:
    obj = load_json_artifact(path)
    return CoclusterModel(
        k=int(obj["k"]), l=int(obj["l"]),
        row_assign={str(u): int(c) for u, c in obj["row_assign"].items()},
        col_assign={str(d): int(c) for d, c in obj["col_assign"].items()},
        tau=int(obj["tau"]), loss_history=[float(v) for v in obj["loss_history"]],
        seed=int(obj["seed"]), restarts=int(obj["restarts"]))
