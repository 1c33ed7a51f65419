"""Parser tests: fixed export rows, malformed input, and round-trip fuzzing."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from traceclust.traces import (DhcpLease, ParseError, SessionEvent,
                               format_dhcp_lease, format_flow_record,
                               format_flow_timestamp, format_iso_timestamp,
                               format_session_event, iter_parsed,
                               load_port_building_map, load_prefix_domain_map,
                               parse_dhcp_lease, parse_flow_record,
                               parse_flow_timestamp, parse_iso_timestamp,
                               parse_session_event, prefix24)

YEAR = 2008

ROW1 = "0618.00:00:07.184 | 0618.00:00:07.184 | 128.125.253.143 | 53 | 207.151.245.121 | 64209 | 17 | 0 | 1 | 469"
ROW2 = "0618.00:00:07.184 | 0618.00:00:07.472 | 207.151.241.60 | 52759 | 74.125.19.17 | 80 | 6 | 0 | 4 | 1789"


def test_export_sample_row1():
    rec = parse_flow_record(ROW1, YEAR)
    assert rec.protocol == 17
    assert rec.packet_count == 1
    assert rec.flow_bytes == 469
    assert rec.duration == 0.0
    assert rec.src_ip == "128.125.253.143"
    assert rec.src_port == 53
    assert rec.dst_ip == "207.151.245.121"
    assert rec.dst_port == 64209
    assert rec.tos == 0


def test_export_sample_row2_duration():
    rec = parse_flow_record(ROW2, YEAR)
    assert rec.duration == pytest.approx(0.288, abs=1e-9)
    assert rec.protocol == 6


def test_non_monotone_interval_rejected():
    swapped = ROW2.split(" | ")
    swapped[0], swapped[1] = swapped[1], swapped[0]
    with pytest.raises(ParseError, match="non-monotone"):
        parse_flow_record(" | ".join(swapped), YEAR)


def test_flow_field_count_and_types():
    with pytest.raises(ParseError, match="expected 10 fields"):
        parse_flow_record("a|b|c", YEAR)
    bad_ip = ROW1.replace("128.125.253.143", "300.1.1.1")
    with pytest.raises(ParseError, match="invalid ip"):
        parse_flow_record(bad_ip, YEAR)
    ipv6 = ROW1.replace("128.125.253.143", "::1")
    with pytest.raises(ParseError, match="invalid ip"):
        parse_flow_record(ipv6, YEAR)
    bad_port = ROW1.replace("| 53 |", "| 70000 |")
    with pytest.raises(ParseError, match="out of range"):
        parse_flow_record(bad_port, YEAR)


def test_zero_packets_nonzero_bytes_rejected():
    fields = [f.strip() for f in ROW1.split("|")]
    fields[8] = "0"
    with pytest.raises(ParseError, match="zero packets"):
        parse_flow_record("|".join(fields), YEAR)


def test_session_events():
    ev = parse_session_event("start,aa:bb:cc:dd:ee:ff,2008-03-01T08:00:00,10.0.0.1,7")
    assert ev == SessionEvent("start", "aa:bb:cc:dd:ee:ff",
                              parse_session_event(
                                  "end,aa:bb:cc:dd:ee:ff,2008-03-01T08:00:00,10.0.0.1,7").ts,
                              "10.0.0.1", 7)
    end = parse_session_event("end,aa:bb:cc:dd:ee:ff,2008-03-01T09:00:00,10.0.0.1,7")
    assert end.event_kind == "end"
    assert end.ts - ev.ts == 3600.0
    with pytest.raises(ParseError, match="invalid mac"):
        parse_session_event("start,zz:zz,2008-03-01T08:00:00,10.0.0.1,7")
    with pytest.raises(ParseError, match="event kind"):
        parse_session_event("open,aa:bb:cc:dd:ee:ff,2008-03-01T08:00:00,10.0.0.1,7")


def test_dhcp_leases():
    lease = parse_dhcp_lease("10.1.1.5,aa:bb:cc:dd:ee:ff,2008-03-01T07:59:00")
    assert lease.ip == "10.1.1.5"
    assert lease.mac == "aa:bb:cc:dd:ee:ff"
    with pytest.raises(ParseError, match="invalid ip"):
        parse_dhcp_lease("300.1.1.5,aa:bb:cc:dd:ee:ff,2008-03-01T07:59:00")
    with pytest.raises(ParseError, match="invalid timestamp"):
        parse_dhcp_lease("10.1.1.5,aa:bb:cc:dd:ee:ff,not-a-time")


def test_mac_normalization():
    lease = parse_dhcp_lease("10.1.1.5,AA-BB-CC-DD-EE-0F,2008-03-01T07:59:00")
    assert lease.mac == "aa:bb:cc:dd:ee:0f"


def test_prefix24():
    assert prefix24("128.125.253.143") == "128.125.253"
    assert prefix24("10.0.0.1") == "10.0.0"


@given(st.ip_addresses(v=4), st.integers(0, 255))
def test_prefix_invariant_under_last_octet(ip, last):
    base = str(ip)
    changed = ".".join(base.split(".")[:3] + [str(last)])
    assert prefix24(base) == prefix24(changed)


_base_ms = round(parse_flow_timestamp("0101.00:00:00.000", YEAR) * 1000)
# canonical epoch floats, i.e. what the parsers themselves produce for some line
_ts = st.integers(0, 365 * 86400_000 - 1).map(
    lambda ms: parse_iso_timestamp(format_iso_timestamp((_base_ms + ms) / 1000.0)))
_ip = st.ip_addresses(v=4).map(str)
_port = st.integers(0, 65535)


@st.composite
def flow_lines(draw):
    start_ms = _base_ms + draw(st.integers(0, 364 * 86400_000))
    finish_ms = start_ms + draw(st.integers(0, 86400_000))
    fields = [format_flow_timestamp(start_ms / 1000.0),
              format_flow_timestamp(finish_ms / 1000.0),
              draw(_ip), str(draw(_port)), draw(_ip), str(draw(_port)),
              str(draw(st.integers(0, 255))), str(draw(st.integers(0, 255))),
              str(draw(st.integers(1, 10**6))), str(draw(st.integers(0, 10**9)))]
    return "|".join(fields)


@settings(max_examples=200, deadline=None)
@given(flow_lines())
def test_flow_round_trip(line):
    rec = parse_flow_record(line, YEAR)
    assert parse_flow_record(format_flow_record(rec), YEAR) == rec


_mac = st.integers(0, 2**48 - 1).map(
    lambda v: ":".join(f"{(v >> (8 * i)) & 0xff:02x}" for i in range(5, -1, -1)))


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(["start", "end"]), _mac, _ts, _ip, st.integers(0, 9999))
def test_session_round_trip(kind, mac, ts, ip, port):
    ev = SessionEvent(kind, mac, ts, ip, port)
    assert parse_session_event(format_session_event(ev)) == ev


@settings(max_examples=100, deadline=None)
@given(_ip, _mac, _ts)
def test_dhcp_round_trip(ip, mac, ts):
    lease = DhcpLease(ip, mac, ts)
    assert parse_dhcp_lease(format_dhcp_lease(lease)) == lease


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=120))
def test_parsers_never_panic(junk):
    for parser in (lambda s: parse_flow_record(s, YEAR), parse_session_event,
                   parse_dhcp_lease):
        try:
            parser(junk)
        except ParseError:
            pass  # the only acceptable failure mode


def test_iter_parsed_skip_vs_abort():
    lines = ["# comment", "", "10.1.1.5,aa:bb:cc:dd:ee:ff,2008-03-01T07:59:00",
             "garbage", "10.1.1.6,aa:bb:cc:dd:ee:01,2008-03-01T08:59:00"]
    errors = []
    records = list(iter_parsed(lines, parse_dhcp_lease, errors))
    assert len(records) == 2
    assert len(errors) == 1 and errors[0].line_no == 4
    with pytest.raises(ParseError):
        list(iter_parsed(lines, parse_dhcp_lease))


def test_mapping_files(tmp_path):
    pd = tmp_path / "prefixes.txt"
    pd.write_text("# map\n74.125.19,google\n207.151.245,campus\n")
    prefix_map = load_prefix_domain_map(pd)
    assert prefix_map.lookup("74.125.19.17") == "google"
    assert prefix_map.lookup("8.8.8.8") is None

    pd.write_text("74.125.19,google\n74.125.19,other\n")
    with pytest.raises(ParseError, match="two domains"):
        load_prefix_domain_map(pd)

    pb = tmp_path / "ports.txt"
    pb.write_text("10.0.0.1:7,LVL\n10.0.0.1:8,SAL\n")
    port_map = load_port_building_map(pb)
    assert port_map.lookup("10.0.0.1", 7) == "LVL"
    assert port_map.lookup("10.0.0.1", 9) is None
