"""Synthetic traces and joint distributions with planted co-cluster structure.

The planted joint is closed form: block mass spread uniformly inside each
(row-cluster, column-cluster) block, mixed with a uniform noise floor. Trace
generation inverts the aggregation pipeline's scaling exactly, so running the
emitted flow/DHCP/session files through the pipeline reproduces the planted
joint (row-normalized, since the pipeline's scaling forces uniform row
marginals) up to millisecond quantization. Periods with drift interpolate the
block-mass table toward a row-permuted copy, which lowers cross-period
stability scores in a controlled way.

Also here: the evaluation oracles that real traces cannot provide, namely
exhaustive co-clustering for small tables and the adjusted Rand index.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

from .cocluster import _mi_dense, mutual_information
from .matrix import JointDistribution
from .provenance import header_lines, write_json_artifact
from .traces import format_flow_timestamp, format_iso_timestamp

MAX_BRUTE_FORCE_DIM = 8


@dataclass
class PlantedSpec:
    """Parameters of the planted structure; block_mass is k x l, sums to 1."""

    k: int
    l: int
    row_sizes: list[int]
    col_sizes: list[int]
    block_mass: np.ndarray
    noise: float = 0.0
    n_buildings: int = 0
    n_building_groups: int = 0
    drift: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.block_mass = np.asarray(self.block_mass, dtype=np.float64)
        if len(self.row_sizes) != self.k or len(self.col_sizes) != self.l:
            raise ValueError("cluster size lists must match k and l")
        if min(self.row_sizes) < 1 or min(self.col_sizes) < 1:
            raise ValueError("degenerate spec: empty planted cluster")
        if self.block_mass.shape != (self.k, self.l):
            raise ValueError(f"block_mass must be {self.k}x{self.l}")
        if np.any(self.block_mass < 0) or abs(float(self.block_mass.sum()) - 1.0) > 1e-9:
            raise ValueError("block_mass must be non-negative and sum to 1")
        if not 0 <= self.noise <= 1:
            raise ValueError("noise must be in [0, 1]")
        if not 0 <= self.drift <= 1:
            raise ValueError("drift must be in [0, 1]")
        if self.n_buildings and not 1 <= self.n_building_groups <= self.n_buildings:
            raise ValueError("building groups must be in [1, n_buildings]")

    def to_json(self) -> dict:
        return {
            "k": self.k, "l": self.l,
            "row_sizes": list(self.row_sizes), "col_sizes": list(self.col_sizes),
            "block_mass": self.block_mass.tolist(),
            "noise": self.noise,
            "n_buildings": self.n_buildings,
            "n_building_groups": self.n_building_groups,
            "drift": self.drift, "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PlantedSpec":
        return cls(k=int(obj["k"]), l=int(obj["l"]),
                   row_sizes=[int(v) for v in obj["row_sizes"]],
                   col_sizes=[int(v) for v in obj["col_sizes"]],
                   block_mass=np.asarray(obj["block_mass"], dtype=np.float64),
                   noise=float(obj.get("noise", 0.0)),
                   n_buildings=int(obj.get("n_buildings", 0)),
                   n_building_groups=int(obj.get("n_building_groups", 0)),
                   drift=float(obj.get("drift", 0.0)),
                   seed=int(obj.get("seed", 0)))


@dataclass
class GroundTruth:
    row_assign: dict[str, int]
    col_assign: dict[str, int]
    building_group: dict[str, int]
    joint: JointDistribution


def _drifted_blocks(spec: PlantedSpec, drift: float) -> np.ndarray:
    if drift == 0 or spec.k == 1:
        return spec.block_mass
    rng = np.random.default_rng((spec.seed, 7))
    perm = rng.permutation(spec.k)
    if np.array_equal(perm, np.arange(spec.k)):
        perm = np.roll(perm, 1)
    return (1.0 - drift) * spec.block_mass + drift * spec.block_mass[perm]


def gen_planted_joint(spec: PlantedSpec,
                      drift: float | None = None) -> tuple[JointDistribution, GroundTruth]:
    """Closed-form planted joint: per-cell mass
    (1-noise) * block(row cluster, col cluster) / (cluster sizes) + noise * uniform."""
    blocks = _drifted_blocks(spec, spec.drift if drift is None else drift)
    row_of = np.repeat(np.arange(spec.k), spec.row_sizes)
    col_of = np.repeat(np.arange(spec.l), spec.col_sizes)
    n, m = row_of.size, col_of.size
    cell_share = blocks / (np.asarray(spec.row_sizes)[:, None]
                           * np.asarray(spec.col_sizes)[None, :])
    dense = (1.0 - spec.noise) * cell_share[np.ix_(row_of, col_of)] \
        + spec.noise / (n * m)
    if np.any(dense.sum(axis=1) <= 0) or np.any(dense.sum(axis=0) <= 0):
        raise ValueError("degenerate spec: a planted row/column carries no mass")
    joint = JointDistribution.from_dense(dense)
    truth = GroundTruth(
        row_assign={rid: int(c) for rid, c in zip(joint.row_ids, row_of)},
        col_assign={cid: int(c) for cid, c in zip(joint.col_ids, col_of)},
        building_group=building_groups(spec),
        joint=joint)
    return joint, truth


def building_ids(spec: PlantedSpec) -> list[str]:
    return [f"b{i:02d}" for i in range(spec.n_buildings)]


def building_groups(spec: PlantedSpec) -> dict[str, int]:
    if not spec.n_buildings:
        return {}
    return {b: i % spec.n_building_groups for i, b in enumerate(building_ids(spec))}


def building_profiles(spec: PlantedSpec) -> dict[str, np.ndarray]:
    """Per-building k x l mixture over cluster pairs; buildings in the same
    ground-truth group share a profile."""
    rng = np.random.default_rng((spec.seed, 11))
    group_tables = []
    for _ in range(spec.n_building_groups):
        table = rng.random((spec.k, spec.l)) + 0.05
        group_tables.append(table / table.sum())
    groups = building_groups(spec)
    return {b: group_tables[g] for b, g in groups.items()}


@dataclass(frozen=True)
class PeriodPlan:
    label: str
    start: float  # epoch seconds, UTC
    days: float
    drift: float = 0.0
    year: int = 2008

    @property
    def end(self) -> float:
        return self.start + self.days * 86400.0


def monthly_periods(count: int, start: float, days: float = 28.0,
                    drift_last: float = 0.0, year: int = 2008) -> list[PeriodPlan]:
    """Consecutive periods m01..mNN; only the final one carries the drift."""
    plans = []
    for i in range(count):
        plans.append(PeriodPlan(label=f"m{i + 1:02d}", start=start + i * days * 86400.0,
                                days=days, drift=drift_last if i == count - 1 else 0.0,
                                year=year))
    return plans


@dataclass
class SynthResult:
    out_dir: Path
    periods: list[PeriodPlan]
    files: dict[str, Path]
    ground_truth: GroundTruth  # reference (undrifted) structure


def _user_ip(i: int) -> str:
    return f"10.{i // 200}.{i % 200}.25"


def _domain_prefix(j: int) -> str:
    return f"198.{50 + j // 200}.{j % 200}"


def _switch_addr(b_idx: int) -> tuple[str, int]:
    return f"172.16.0.{b_idx // 48}", b_idx % 48 + 1


def gen_synthetic_traces(spec: PlantedSpec, out_dir: str | Path,
                         periods: list[PeriodPlan], flows_per_period: int = 10_000,
                         s_target: float = 3.0) -> SynthResult:
    """Emit per-period flow/session/DHCP files plus the mapping tables and a
    ground-truth sidecar.

    Per period the planted joint (at that period's drift) is row-normalized
    and inverted through the pipeline scaling: each (user, domain) cell gets
    disjoint flow intervals whose union is expm1(s_target * relative share)
    minutes, so aggregation + scaling reproduce the planted distribution
    exactly up to millisecond rounding. Each cell's flows happen at one
    building drawn from the building profiles with a per-cell seed that does
    not depend on the period, so undrifted periods are carbon copies offset
    in time. Everything is deterministic given the spec seed.
    """
    if spec.n_buildings < 1:
        raise ValueError("trace generation needs at least one building")
    if flows_per_period < 1:
        raise ValueError("flows_per_period must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    profiles = building_profiles(spec)
    b_ids = building_ids(spec)
    n_users = sum(spec.row_sizes)
    n_domains = sum(spec.col_sizes)
    macs = [f"02:00:00:00:{i // 256:02x}:{i % 256:02x}" for i in range(n_users)]
    domains = [f"dom{j:03d}" for j in range(n_domains)]

    header = header_lines(config=spec.to_json())
    files: dict[str, Path] = {}

    def write(name: str, lines: list[str]) -> Path:
        path = out_dir / name
        path.write_text("\n".join(header + lines) + "\n", encoding="utf-8")
        files[name] = path
        return path

    write("prefix_domains.txt",
          [f"{_domain_prefix(j)},{domains[j]}" for j in range(n_domains)])
    port_lines = []
    for i, b in enumerate(b_ids):
        switch_ip, port = _switch_addr(i)
        port_lines.append(f"{switch_ip}:{port},{b}")
    write("port_buildings.txt", port_lines)
    local_prefixes = sorted({_user_ip(i).rsplit(".", 1)[0] for i in range(n_users)})
    write("local_prefixes.txt", local_prefixes)

    def as_trace_truth(joint: JointDistribution, truth: GroundTruth) -> GroundTruth:
        # ground truth keyed by the identities the pipeline will see
        return GroundTruth(
            row_assign={macs[i]: truth.row_assign[rid]
                        for i, rid in enumerate(joint.row_ids)},
            col_assign={domains[j]: truth.col_assign[cid]
                        for j, cid in enumerate(joint.col_ids)},
            building_group=truth.building_group, joint=joint)

    reference_truth: GroundTruth | None = None
    for plan in periods:
        joint, truth = gen_planted_joint(spec, drift=plan.drift)
        row_of = np.array([truth.row_assign[rid] for rid in joint.row_ids])
        col_of = np.array([truth.col_assign[cid] for cid in joint.col_ids])
        if plan.drift == 0 and reference_truth is None:
            reference_truth = as_trace_truth(joint, truth)
        dense = joint.toarray()
        row_norm = dense / dense.sum(axis=1, keepdims=True) / dense.shape[0]
        rel = row_norm / row_norm.max(axis=1, keepdims=True)

        flow_lines: list[str] = []
        session_lines: list[str] = []
        dhcp_lines: list[str] = []
        period_start_ms = round(plan.start * 1000)
        period_end_ms = round(plan.end * 1000)
        flow_no = 0
        for u in range(n_users):
            dhcp_lines.append(f"{_user_ip(u)},{macs[u]},"
                              f"{_format_iso(period_start_ms - 3_600_000)}")
            by_building: dict[int, list[tuple[int, int, float]]] = {}
            for dcol in np.flatnonzero(row_norm[u] > 0):
                d = int(dcol)
                cell_rng = np.random.default_rng((spec.seed, 13, u, d))
                weights = np.array([profiles[b][row_of[u], col_of[d]]
                                    for b in b_ids])
                b_idx = int(cell_rng.choice(spec.n_buildings, p=weights / weights.sum()))
                n_flows = max(1, round(flows_per_period * row_norm[u, d]))
                minutes = math.expm1(s_target * rel[u, d])
                by_building.setdefault(b_idx, []).append((d, n_flows, minutes))

            cursor_ms = period_start_ms + 60_000
            for b_idx in sorted(by_building):
                switch_ip, port = _switch_addr(b_idx)
                sess_start_ms = cursor_ms - 1_000
                for d, n_flows, minutes in by_building[b_idx]:
                    dur_ms = max(1, round(minutes * 60_000 / n_flows))
                    for i in range(n_flows):
                        start_ms, end_ms = cursor_ms, cursor_ms + dur_ms
                        src, dst = _user_ip(u), f"{_domain_prefix(d)}.10"
                        sport, dport = 49152 + flow_no % 16000, 80
                        if flow_no % 2:
                            src, dst, sport, dport = dst, src, dport, sport
                        packets = 1 + flow_no % 9
                        flow_lines.append(
                            f"{_format_flow_ts(start_ms)}|{_format_flow_ts(end_ms)}|"
                            f"{src}|{sport}|{dst}|{dport}|6|0|{packets}|{packets * 256}")
                        flow_no += 1
                        cursor_ms = end_ms + 1_000
                    cursor_ms += 1_000
                session_lines.append(f"start,{macs[u]},{_format_iso(sess_start_ms)},"
                                     f"{switch_ip},{port}")
                session_lines.append(f"end,{macs[u]},{_format_iso(cursor_ms + 1_000)},"
                                     f"{switch_ip},{port}")
                cursor_ms += 5_000
            if cursor_ms >= period_end_ms:
                raise ValueError(f"user {u} activity does not fit period {plan.label}")

        write(f"flows_{plan.label}.txt", flow_lines)
        write(f"sessions_{plan.label}.txt", sorted(session_lines))
        write(f"dhcp_{plan.label}.txt", dhcp_lines)

    if reference_truth is None:  # all periods drifted; use the first as reference
        joint, truth = gen_planted_joint(spec, drift=periods[0].drift)
        reference_truth = as_trace_truth(joint, truth)
    truth_path = out_dir / "ground_truth.json"
    write_json_artifact(truth_path, {
        "spec": spec.to_json(),
        "row_assign": reference_truth.row_assign,
        "col_assign": reference_truth.col_assign,
        "building_group": reference_truth.building_group,
        "local_prefixes": local_prefixes,
        "periods": [{"label": p.label, "start": p.start, "end": p.end,
                     "drift": p.drift, "year": p.year} for p in periods],
        "params": {"flows_per_period": flows_per_period, "s_target": s_target},
    }, config=spec.to_json())
    files["ground_truth.json"] = truth_path
    return SynthResult(out_dir, periods, files, reference_truth)


def _format_flow_ts(ms_total: int) -> str:
    return format_flow_timestamp(ms_total / 1000.0)


def _format_iso(ms_total: int) -> str:
    return format_iso_timestamp(ms_total / 1000.0)


def adjusted_rand_index(a: Mapping, b: Mapping) -> float:
    """Chance-corrected agreement between two partitions of one element set.

    Partitions are given as element -> label mappings; labels themselves are
    arbitrary. 1 means identical partitions, around 0 chance-level agreement.
    """
    if set(a) != set(b):
        raise ValueError("partitions cover different element sets")
    n = len(a)
    if n < 2:
        return 1.0
    joint = Counter((a[e], b[e]) for e in a)
    count_a = Counter(a.values())
    count_b = Counter(b.values())
    sum_ij = sum(math.comb(c, 2) for c in joint.values())
    sum_a = sum(math.comb(c, 2) for c in count_a.values())
    sum_b = sum(math.comb(c, 2) for c in count_b.values())
    expected = sum_a * sum_b / math.comb(n, 2)
    max_index = (sum_a + sum_b) / 2
    if max_index == expected:
        return 1.0
    return (sum_ij - expected) / (max_index - expected)


def _partitions_exactly(n: int, blocks: int) -> Iterator[tuple[int, ...]]:
    """Restricted-growth strings over n elements using exactly `blocks` labels."""
    assign = [0] * n

    def rec(i: int, used: int) -> Iterator[tuple[int, ...]]:
        if blocks - used > n - i:
            return
        if i == n:
            if used == blocks:
                yield tuple(assign)
            return
        for c in range(min(used + 1, blocks)):
            assign[i] = c
            yield from rec(i + 1, used + (1 if c == used else 0))

    yield from rec(0, 0)


def brute_force_cocluster(p: JointDistribution, k: int,
                          l: int) -> tuple[float, dict[str, int], dict[str, int]]:
    """Global-optimum co-clustering by exhaustive partition enumeration.

    Only for tables up to 8x8; the search covers every surjective row and
    column partition, so the returned loss lower-bounds anything the
    iterative engine can reach on the same inputs.
    """
    n, m = p.shape
    if n > MAX_BRUTE_FORCE_DIM or m > MAX_BRUTE_FORCE_DIM:
        raise ValueError(f"brute force limited to {MAX_BRUTE_FORCE_DIM} rows/columns")
    if not 1 <= k <= n or not 1 <= l <= m:
        raise ValueError("cluster counts outside table dimensions")
    dense = p.toarray()
    i_xy = mutual_information(p)
    col_partitions = [np.array(ca, dtype=np.int64) for ca in _partitions_exactly(m, l)]
    onehots = [np.equal.outer(ca, np.arange(l)).astype(np.float64)
               for ca in col_partitions]
    best = (math.inf, None, None)
    for ra_tuple in _partitions_exactly(n, k):
        ra = np.array(ra_tuple, dtype=np.int64)
        reduced = np.zeros((k, m))
        np.add.at(reduced, ra, dense)
        for ca, onehot in zip(col_partitions, onehots):
            value = i_xy - _mi_dense(reduced @ onehot)
            if value < best[0]:
                best = (value, ra, ca)
    _, ra, ca = best
    return best[0], \
        {rid: int(c) for rid, c in zip(p.row_ids, ra)}, \
        {cid: int(c) for cid, c in zip(p.col_ids, ca)}
