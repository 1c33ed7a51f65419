"""Record types and line parsers for the three wireless-trace kinds.

Canonical file formats (one record per line, ``|`` or ``,`` delimited,
lines starting with ``#`` are comments):

* flow records, 10 fields:
  ``start|finish|src_ip|src_port|dst_ip|dst_port|protocol|tos|packets|bytes``
  with timestamps as ``MMDD.HH:MM:SS.mmm`` (year supplied by the caller,
  the export format omits it)
* session events: ``kind,mac,iso_timestamp,switch_ip,port`` with kind in
  {start, end}
* dhcp leases: ``ip,mac,iso_timestamp``

Mapping tables are two-column text: ``a.b.c,domain`` for /24-prefix to
domain, and ``switch_ip:port,building`` for switch ports to buildings.

All timestamps are naive UTC internally, stored as float epoch seconds
with millisecond resolution. Only IPv4 is supported; IPv6 input is a
parse error. Parsers are pure functions and never raise anything other
than ParseError on bad input.
"""

from __future__ import annotations

import ipaddress
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Iterator, TypeVar

_MAC_RE = re.compile(r"^([0-9a-fA-F]{2})([:-])([0-9a-fA-F]{2})\2([0-9a-fA-F]{2})\2"
                     r"([0-9a-fA-F]{2})\2([0-9a-fA-F]{2})\2([0-9a-fA-F]{2})$")
_FLOW_TS_RE = re.compile(r"^(\d{2})(\d{2})\.(\d{2}):(\d{2}):(\d{2})\.(\d{3})$")

T = TypeVar("T")


class ParseError(ValueError):
    """Record-level parse failure, optionally tagged with a 1-based line number."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class FlowRecord:
    """One unidirectional flow export row."""

    start_ts: float
    finish_ts: float
    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int
    protocol: int
    tos: int  # parsed for completeness, unused downstream
    packet_count: int
    flow_bytes: int

    @property
    def duration(self) -> float:
        # computed in millisecond space: epoch-scale float subtraction would
        # smear the wire format's exact ms resolution
        return (round(self.finish_ts * 1000) - round(self.start_ts * 1000)) / 1000.0


@dataclass(frozen=True)
class SessionEvent:
    """A device association 'start' or 'end' event at a switch port."""

    event_kind: str  # "start" | "end"
    mac: str
    ts: float
    switch_ip: str
    switch_port: int


@dataclass(frozen=True)
class DhcpLease:
    """A dynamic IP assignment: `ip` belongs to `mac` from `ts` onward."""

    ip: str
    mac: str
    ts: float


@dataclass
class PrefixDomainMap:
    """Maps /24 IPv4 prefixes ("a.b.c") to lowercase domain names."""

    entries: dict[str, str]

    def lookup(self, ip: str) -> str | None:
        return self.entries.get(prefix24(ip))

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class PortBuildingMap:
    """Maps (switch_ip, switch_port) pairs to building ids."""

    entries: dict[tuple[str, int], str]

    def lookup(self, switch_ip: str, port: int) -> str | None:
        return self.entries.get((switch_ip, port))

    def __len__(self) -> int:
        return len(self.entries)


def prefix24(ip: str) -> str:
    """First 24 bits of a dotted-quad IPv4 address, as "a.b.c"."""
    return ip.rsplit(".", 1)[0]


def _split_fields(line: str) -> list[str]:
    delim = "|" if "|" in line else ","
    return [field.strip() for field in line.split(delim)]


def _parse_ipv4(text: str, line_no: int | None) -> str:
    try:
        addr = ipaddress.ip_address(text)
    except ValueError:
        raise ParseError(f"invalid ip {text!r}", line_no) from None
    if not isinstance(addr, ipaddress.IPv4Address):
        raise ParseError(f"invalid ip {text!r}: only IPv4 is supported", line_no)
    return str(addr)


def _parse_mac(text: str, line_no: int | None) -> str:
    m = _MAC_RE.match(text)
    if m is None:
        raise ParseError(f"invalid mac {text!r}", line_no)
    groups = m.groups()
    return ":".join(g.lower() for g in groups if g not in (":", "-"))


def _parse_int(text: str, name: str, lo: int, hi: int | None, line_no: int | None) -> int:
    try:
        value = int(text)
    except ValueError:
        raise ParseError(f"invalid {name} {text!r}", line_no) from None
    if value < lo or (hi is not None and value > hi):
        raise ParseError(f"{name} {value} out of range", line_no)
    return value


def parse_flow_timestamp(text: str, year: int, line_no: int | None = None) -> float:
    """Parse a ``MMDD.HH:MM:SS.mmm`` export timestamp against a known year."""
    m = _FLOW_TS_RE.match(text)
    if m is None:
        raise ParseError(f"invalid timestamp {text!r}", line_no)
    mon, day, hh, mm, ss, ms = (int(g) for g in m.groups())
    try:
        dt = datetime(year, mon, day, hh, mm, ss, ms * 1000, tzinfo=timezone.utc)
    except ValueError as e:
        raise ParseError(f"invalid timestamp {text!r}: {e}", line_no) from None
    return dt.timestamp()


def format_flow_timestamp(ts: float) -> str:
    """Inverse of parse_flow_timestamp (the year is dropped, as in the export)."""
    ms_total = round(ts * 1000)
    sec, ms = divmod(ms_total, 1000)
    dt = datetime.fromtimestamp(sec, tz=timezone.utc)
    return f"{dt:%m%d.%H:%M:%S}.{ms:03d}"


def parse_iso_timestamp(text: str, line_no: int | None = None) -> float:
    """Parse an ISO-8601 timestamp; naive values are taken as UTC."""
    try:
        dt = datetime.fromisoformat(text)
    except ValueError:
        raise ParseError(f"invalid timestamp {text!r}", line_no) from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def format_iso_timestamp(ts: float) -> str:
    ms_total = round(ts * 1000)
    sec, ms = divmod(ms_total, 1000)
    dt = datetime.fromtimestamp(sec, tz=timezone.utc)
    base = f"{dt:%Y-%m-%dT%H:%M:%S}"
    return base if ms == 0 else f"{base}.{ms:03d}"


def parse_flow_record(line: str, year: int, line_no: int | None = None) -> FlowRecord:
    """Parse one 10-field flow export line.

    The year is a required configuration input because flow timestamps omit
    it. Raises ParseError on malformed field counts, unparseable values, or
    a finish time before the start time.
    """
    fields = _split_fields(line)
    if len(fields) != 10:
        raise ParseError(f"expected 10 fields, got {len(fields)}", line_no)
    start_ts = parse_flow_timestamp(fields[0], year, line_no)
    finish_ts = parse_flow_timestamp(fields[1], year, line_no)
    if finish_ts < start_ts:
        raise ParseError("non-monotone interval: finish precedes start", line_no)
    record = FlowRecord(
        start_ts=start_ts,
        finish_ts=finish_ts,
        src_ip=_parse_ipv4(fields[2], line_no),
        src_port=_parse_int(fields[3], "port", 0, 65535, line_no),
        dst_ip=_parse_ipv4(fields[4], line_no),
        dst_port=_parse_int(fields[5], "port", 0, 65535, line_no),
        protocol=_parse_int(fields[6], "protocol", 0, 255, line_no),
        tos=_parse_int(fields[7], "tos", 0, 255, line_no),
        packet_count=_parse_int(fields[8], "packet count", 0, None, line_no),
        flow_bytes=_parse_int(fields[9], "flow bytes", 0, None, line_no),
    )
    if record.flow_bytes > 0 and record.packet_count < 1:
        raise ParseError("zero packets in a flow with nonzero bytes", line_no)
    return record


def format_flow_record(record: FlowRecord) -> str:
    """Canonical pipe-delimited text form; reparsing with the right year round-trips."""
    return "|".join([
        format_flow_timestamp(record.start_ts),
        format_flow_timestamp(record.finish_ts),
        record.src_ip,
        str(record.src_port),
        record.dst_ip,
        str(record.dst_port),
        str(record.protocol),
        str(record.tos),
        str(record.packet_count),
        str(record.flow_bytes),
    ])


def parse_session_event(line: str, line_no: int | None = None) -> SessionEvent:
    """Parse one association-event line: kind, mac, timestamp, switch ip, port."""
    fields = _split_fields(line)
    if len(fields) != 5:
        raise ParseError(f"expected 5 fields, got {len(fields)}", line_no)
    kind = fields[0].lower()
    if kind not in ("start", "end"):
        raise ParseError(f"invalid event kind {fields[0]!r}", line_no)
    return SessionEvent(
        event_kind=kind,
        mac=_parse_mac(fields[1], line_no),
        ts=parse_iso_timestamp(fields[2], line_no),
        switch_ip=_parse_ipv4(fields[3], line_no),
        switch_port=_parse_int(fields[4], "port", 0, None, line_no),
    )


def format_session_event(event: SessionEvent) -> str:
    return ",".join([event.event_kind, event.mac, format_iso_timestamp(event.ts),
                     event.switch_ip, str(event.switch_port)])


def parse_dhcp_lease(line: str, line_no: int | None = None) -> DhcpLease:
    """Parse one lease line: ip, mac, timestamp."""
    fields = _split_fields(line)
    if len(fields) != 3:
        raise ParseError(f"expected 3 fields, got {len(fields)}", line_no)
    return DhcpLease(
        ip=_parse_ipv4(fields[0], line_no),
        mac=_parse_mac(fields[1], line_no),
        ts=parse_iso_timestamp(fields[2], line_no),
    )


def format_dhcp_lease(lease: DhcpLease) -> str:
    return ",".join([lease.ip, lease.mac, format_iso_timestamp(lease.ts)])


def iter_parsed(lines: Iterable[str], parser: Callable[[str, int], T],
                errors: list[ParseError] | None = None) -> Iterator[T]:
    """Parse lines, skipping blanks and ``#`` comments.

    With ``errors=None`` the first bad record aborts (ParseError propagates);
    otherwise bad records are collected there and skipped.
    """
    for line_no, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            yield parser(line, line_no)
        except ParseError as err:
            if errors is None:
                raise
            errors.append(err)


def read_flow_file(path: str | Path, year: int,
                   errors: list[ParseError] | None = None) -> Iterator[FlowRecord]:
    with open(path, encoding="utf-8") as fh:
        yield from iter_parsed(fh, lambda line, n: parse_flow_record(line, year, n), errors)


def read_session_file(path: str | Path,
                      errors: list[ParseError] | None = None) -> Iterator[SessionEvent]:
    with open(path, encoding="utf-8") as fh:
        yield from iter_parsed(fh, parse_session_event, errors)


def read_dhcp_file(path: str | Path,
                   errors: list[ParseError] | None = None) -> Iterator[DhcpLease]:
    with open(path, encoding="utf-8") as fh:
        yield from iter_parsed(fh, parse_dhcp_lease, errors)


def _parse_prefix(text: str, line_no: int | None) -> str:
    parts = text.split(".")
    if len(parts) != 3:
        raise ParseError(f"invalid /24 prefix {text!r}", line_no)
    for part in parts:
        if not part.isdigit() or not 0 <= int(part) <= 255:
            raise ParseError(f"invalid /24 prefix {text!r}", line_no)
    return ".".join(str(int(p)) for p in parts)


def load_prefix_domain_map(path: str | Path) -> PrefixDomainMap:
    """Load a ``prefix,domain`` mapping file. Conflicting duplicates are errors."""
    entries: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = _split_fields(line)
            if len(fields) != 2:
                raise ParseError(f"expected 2 fields, got {len(fields)}", line_no)
            prefix = _parse_prefix(fields[0], line_no)
            domain = fields[1].lower()
            if not domain:
                raise ParseError("empty domain name", line_no)
            if entries.get(prefix, domain) != domain:
                raise ParseError(f"prefix {prefix} mapped to two domains", line_no)
            entries[prefix] = domain
    return PrefixDomainMap(entries)


def load_port_building_map(path: str | Path) -> PortBuildingMap:
    """Load a ``switch_ip:port,building`` mapping file."""
    entries: dict[tuple[str, int], str] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = _split_fields(line)
            if len(fields) != 2:
                raise ParseError(f"expected 2 fields, got {len(fields)}", line_no)
            if ":" not in fields[0]:
                raise ParseError(f"expected switch_ip:port, got {fields[0]!r}", line_no)
            ip_text, port_text = fields[0].rsplit(":", 1)
            key = (_parse_ipv4(ip_text.strip(), line_no),
                   _parse_int(port_text.strip(), "port", 0, None, line_no))
            building = fields[1]
            if not building:
                raise ParseError("empty building id", line_no)
            if entries.get(key, building) != building:
                raise ParseError(f"port {fields[0]} mapped to two buildings", line_no)
            entries[key] = building
    return PortBuildingMap(entries)
