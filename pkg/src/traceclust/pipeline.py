"""Trace integration and aggregation into user-by-domain online-time matrices.

This stage joins the three trace streams: DHCP leases resolve the local IP of
each flow to a user mac, session events resolve the mac to a building for the
flow's time window, and the prefix map resolves the peer IP to a domain. The
surviving flows are aggregated per period (and optionally per building) into
ContingencyMatrix objects holding online minutes.

"Online time" for one (user, domain) pair is the length of the union of that
pair's flow intervals, so overlapping parallel flows count once; a
``sum_durations`` switch selects the naive additive alternative for
sensitivity checks. Zero-duration flows are widened to a configurable floor
(default one second) so they are not lost.
"""

from __future__ import annotations

import logging
from bisect import bisect_right
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .matrix import ContingencyMatrix, scale_matrix  # noqa: F401  (scale_matrix re-exported)
from .traces import (DhcpLease, FlowRecord, PortBuildingMap, PrefixDomainMap,
                     SessionEvent, prefix24)

logger = logging.getLogger(__name__)


class AmbiguousEndpointError(ValueError):
    """Neither or both flow endpoints lie inside the local networks."""


class UnknownPortError(KeyError):
    """A session's switch port is missing from the port-building map."""


@dataclass(frozen=True)
class Period:
    """A labeled half-open time range [start, end) with the export year."""

    label: str
    start: float
    end: float
    year: int

    def contains(self, ts: float) -> bool:
        return self.start <= ts < self.end


class LeaseTimeline:
    """Per-IP lease history answering "which mac held this IP at time t?".

    A lease holds until the next lease for the same IP. When one IP has two
    leases at the same timestamp, the later record in input order wins.
    """

    def __init__(self, leases: Iterable[DhcpLease]):
        per_ip: dict[str, dict[float, str]] = defaultdict(dict)
        for lease in leases:
            per_ip[lease.ip][lease.ts] = lease.mac
        self._by_ip: dict[str, tuple[list[float], list[str]]] = {}
        for ip, by_ts in per_ip.items():
            ts_sorted = sorted(by_ts)
            self._by_ip[ip] = (ts_sorted, [by_ts[t] for t in ts_sorted])

    def lookup(self, ip: str, ts: float) -> str | None:
        """Mac of the latest lease for `ip` with lease ts <= `ts`, else None."""
        entry = self._by_ip.get(ip)
        if entry is None:
            return None
        idx = bisect_right(entry[0], ts) - 1
        return entry[1][idx] if idx >= 0 else None


def split_endpoints(flow: FlowRecord, local_prefixes: set[str]) -> tuple[str, str]:
    """Identify (local_ip, peer_ip); exactly one endpoint must be local."""
    src_local = prefix24(flow.src_ip) in local_prefixes
    dst_local = prefix24(flow.dst_ip) in local_prefixes
    if src_local == dst_local:
        side = "both" if src_local else "neither"
        raise AmbiguousEndpointError(
            f"{side} endpoints local: {flow.src_ip} -> {flow.dst_ip}")
    return (flow.src_ip, flow.dst_ip) if src_local else (flow.dst_ip, flow.src_ip)


def resolve_user(flow: FlowRecord, timeline: LeaseTimeline,
                 local_prefixes: set[str]) -> str | None:
    """Mac of the lease active at flow start for the local endpoint, or None."""
    local_ip, _ = split_endpoints(flow, local_prefixes)
    return timeline.lookup(local_ip, flow.start_ts)


@dataclass(frozen=True)
class SessionInterval:
    mac: str
    start: float
    end: float
    switch_ip: str
    switch_port: int


def build_session_intervals(events: Iterable[SessionEvent],
                            period_end: float) -> tuple[dict[str, list[SessionInterval]], int]:
    """Pair start/end events into intervals per (mac, switch_ip, port).

    A start while another start is open on the same port closes the earlier
    session at the new start. Unterminated starts are closed at `period_end`.
    Returns (intervals by mac, count of end events with no matching start).
    """
    ordered = sorted(events, key=lambda e: (e.ts, e.mac, e.switch_ip, e.switch_port,
                                            e.event_kind))
    open_starts: dict[tuple[str, str, int], float] = {}
    intervals: dict[str, list[SessionInterval]] = defaultdict(list)
    orphan_ends = 0
    for ev in ordered:
        key = (ev.mac, ev.switch_ip, ev.switch_port)
        if ev.event_kind == "start":
            if key in open_starts:
                intervals[ev.mac].append(SessionInterval(ev.mac, open_starts[key], ev.ts,
                                                         ev.switch_ip, ev.switch_port))
            open_starts[key] = ev.ts
        else:
            start = open_starts.pop(key, None)
            if start is None:
                orphan_ends += 1
            else:
                intervals[ev.mac].append(SessionInterval(ev.mac, start, ev.ts,
                                                         ev.switch_ip, ev.switch_port))
    for (mac, switch_ip, port), start in sorted(open_starts.items()):
        intervals[mac].append(SessionInterval(mac, start, period_end, switch_ip, port))
    for mac in intervals:
        intervals[mac].sort(key=lambda s: (s.start, s.end, s.switch_ip, s.switch_port))
    return dict(intervals), orphan_ends


def resolve_location(flow_interval: tuple[float, float], mac: str,
                     sessions: Mapping[str, Sequence[SessionInterval]],
                     ports: PortBuildingMap) -> str | None:
    """Building of the mac's session with maximal overlap with the flow.

    Ties go to the earliest session start. Returns None when no session
    intersects the flow; raises UnknownPortError when the best session's
    port has no building mapping.
    """
    start, finish = flow_interval
    best: SessionInterval | None = None
    best_overlap = -1.0
    for sess in sessions.get(mac, ()):
        if sess.start > finish:
            break  # sessions sorted by start; nothing later can intersect
        if min(finish, sess.end) < max(start, sess.start):
            continue
        overlap = min(finish, sess.end) - max(start, sess.start)
        if overlap > best_overlap or (overlap == best_overlap
                                      and best is not None and sess.start < best.start):
            best, best_overlap = sess, overlap
    if best is None:
        return None
    building = ports.lookup(best.switch_ip, best.switch_port)
    if building is None:
        raise UnknownPortError(f"{best.switch_ip}:{best.switch_port}")
    return building


def filter_prefixes(peer_prefixes: Iterable[str], threshold: int) -> set[str]:
    """Peer /24 prefixes whose flow count reaches the threshold."""
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    counts = Counter(peer_prefixes)
    return {prefix for prefix, n in counts.items() if n >= threshold}


def select_top_domains(activity: Mapping[str, float], d: int) -> tuple[list[str], bool]:
    """The `d` most active domains, ties broken lexicographically.

    Returns (domains, short) where `short` flags that fewer than `d` domains
    were available (all are returned in that case).
    """
    if d < 1:
        raise ValueError("domain count must be >= 1")
    ranked = sorted(activity, key=lambda dom: (-activity[dom], dom))
    if len(ranked) < d:
        logger.warning("only %d domains available, %d requested", len(ranked), d)
        return ranked, True
    return ranked[:d], False


@dataclass(frozen=True)
class ResolvedFlow:
    """A flow after user/domain resolution, ready for aggregation."""

    user: str
    domain: str
    start: float
    finish: float
    building: str | None = None


def union_minutes(intervals: Iterable[tuple[float, float]]) -> float:
    """Length in minutes of the union of the given [start, end] intervals."""
    merged = 0.0
    cur_start = cur_end = None
    for start, end in sorted(intervals):
        if cur_end is None or start > cur_end:
            if cur_end is not None:
                merged += cur_end - cur_start
            cur_start, cur_end = start, end
        elif end > cur_end:
            cur_end = end
    if cur_end is not None:
        merged += cur_end - cur_start
    return merged / 60.0


def aggregate_online_time(flows: Iterable[ResolvedFlow], period: Period,
                          by_building: bool = False, eps_seconds: float = 1.0,
                          sum_durations: bool = False):
    """Aggregate resolved flows into ContingencyMatrix cells of online minutes.

    Returns one matrix, or a dict keyed by building id when `by_building` is
    set (flows without a resolved building are then skipped). The result is
    independent of flow input order.
    """
    groups: dict[str | None, dict[tuple[str, str], list[tuple[float, float]]]]
    groups = defaultdict(lambda: defaultdict(list))
    for flow in flows:
        interval = (flow.start, flow.finish if flow.finish > flow.start
                    else flow.start + eps_seconds)
        if by_building:
            if flow.building is None:
                continue
            groups[flow.building][(flow.user, flow.domain)].append(interval)
        else:
            groups[None][(flow.user, flow.domain)].append(interval)

    def build(cells_intervals) -> ContingencyMatrix:
        cells = {}
        for key, intervals in cells_intervals.items():
            if sum_durations:
                cells[key] = sum(end - start for start, end in intervals) / 60.0
            else:
                cells[key] = union_minutes(intervals)
        return ContingencyMatrix.from_cells(cells, period=period.label)

    if by_building:
        return {building: build(groups[building]) for building in sorted(groups)}
    return build(groups[None])


@dataclass
class PipelineConfig:
    period: Period
    local_prefixes: set[str]
    prefix_threshold: int = 100_000
    top_domains: int = 100
    eps_seconds: float = 1.0
    sum_durations: bool = False


@dataclass
class PipelineResult:
    global_matrix: ContingencyMatrix
    by_building: dict[str, ContingencyMatrix]
    top_domains: list[str]
    kept_prefixes: set[str]
    counters: dict[str, int] = field(default_factory=dict)


def run_pipeline(flows: Iterable[FlowRecord], leases: Iterable[DhcpLease],
                 session_events: Iterable[SessionEvent], prefix_map: PrefixDomainMap,
                 port_map: PortBuildingMap, config: PipelineConfig) -> PipelineResult:
    """Full integration: resolve users, filter prefixes/domains, locate, aggregate.

    Flows outside the period are skipped; a flow belongs to the period of its
    start time and its finish is clipped to the period end. Unresolvable flows
    are counted, never fatal; location failures only exclude a flow from the
    per-building matrices.
    """
    period = config.period
    timeline = LeaseTimeline(leases)
    sessions, orphan_ends = build_session_intervals(session_events, period.end)

    counters = Counter(orphan_session_ends=orphan_ends)
    stage1: list[tuple[str, str, float, float]] = []  # (user, peer_prefix, start, finish)
    for flow in flows:
        counters["flows_total"] += 1
        if not period.contains(flow.start_ts):
            counters["flows_out_of_period"] += 1
            continue
        try:
            local_ip, peer_ip = split_endpoints(flow, config.local_prefixes)
        except AmbiguousEndpointError:
            counters["ambiguous_endpoints"] += 1
            continue
        user = timeline.lookup(local_ip, flow.start_ts)
        if user is None:
            counters["unresolved_user"] += 1
            continue
        finish = min(flow.finish_ts, period.end)
        stage1.append((user, prefix24(peer_ip), flow.start_ts, finish))
    counters["flows_in_period"] = counters["flows_total"] - counters["flows_out_of_period"]

    kept_prefixes = filter_prefixes((p for _, p, _, _ in stage1), config.prefix_threshold)
    domain_activity: Counter[str] = Counter()
    stage2: list[tuple[str, str, float, float]] = []
    for user, prefix, start, finish in stage1:
        if prefix not in kept_prefixes:
            counters["flows_below_prefix_threshold"] += 1
            continue
        domain = prefix_map.entries.get(prefix)
        if domain is None:
            counters["unresolvable_prefix"] += 1
            continue
        domain_activity[domain] += 1
        stage2.append((user, domain, start, finish))

    top, short = select_top_domains(domain_activity, config.top_domains) \
        if domain_activity else ([], True)
    counters["domains_short_of_request"] = int(short)
    top_set = set(top)

    resolved: list[ResolvedFlow] = []
    for user, domain, start, finish in stage2:
        if domain not in top_set:
            counters["flows_outside_top_domains"] += 1
            continue
        try:
            building = resolve_location((start, finish), user, sessions, port_map)
        except UnknownPortError:
            counters["unknown_port"] += 1
            building = None
        if building is None:
            counters["unlocated_flows"] += 1
        resolved.append(ResolvedFlow(user, domain, start, finish, building))
    counters["flows_aggregated"] = len(resolved)

    global_matrix = aggregate_online_time(resolved, period, eps_seconds=config.eps_seconds,
                                          sum_durations=config.sum_durations)
    by_building = aggregate_online_time(resolved, period, by_building=True,
                                        eps_seconds=config.eps_seconds,
                                        sum_durations=config.sum_durations)
    logger.info("period %s: %d users x %d domains, %d buildings, counters=%s",
                period.label, *global_matrix.shape, len(by_building), dict(counters))
    return PipelineResult(global_matrix, by_building, top, kept_prefixes, dict(counters))
