import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idsbench.errors import PcapError, ValidationError
from idsbench.plan import AttackType
from idsbench.traceprep import (
    SYNTH_ATTACKER, SYNTH_TARGET, build_frame, decode_frame, internet_checksum, prepare_trace,
    read_capture, read_trace, rebase_timestamps, rewrite_source, strip_responses,
    synth_attack_capture, write_capture, write_trace,
)
from idsbench.traceprep.packets import (
    PROTO_ICMP, PROTO_TCP, PROTO_UDP, TCP_ACK, TCP_RST, TCP_SYN, set_source,
)
from idsbench.traceprep.pcap import capture_bytes

from oracles import frame_checksums_valid, frame_src, ones_complement_sum

A, T = "192.168.1.7", "192.168.1.20"


def _pkt(src, dst, proto=PROTO_TCP, sport=40000, dport=80, ts=(100, 0), **kw):
    return decode_frame(ts[0], ts[1], build_frame(src, dst, proto, sport, dport, **kw))


def syn_scan_fixture():
    """10 packets: 6 SYN probes from the attacker, 4 responses from the target."""
    pkts = []
    t = 0
    for i, port in enumerate((21, 22, 23, 80, 443, 8080)):
        t += 1000
        pkts.append(_pkt(A, T, sport=50000, dport=port, flags=TCP_SYN, ts=(100, t)))
        if i in (1, 3):
            pkts.append(_pkt(T, A, sport=port, dport=50000, flags=TCP_SYN | TCP_ACK,
                             ts=(100, t + 10)))
        elif i in (0, 2):
            pkts.append(_pkt(T, A, sport=port, dport=50000, flags=TCP_RST | TCP_ACK,
                             ts=(100, t + 10)))
    return pkts


def test_checksum_matches_oracle_on_known_vector():
    # Worked example from RFC 1071: sum 0xddf2 -> checksum 0x220d
    data = bytes.fromhex("0001f203f4f5f6f7")
    assert internet_checksum(data) == 0x220D
    assert ones_complement_sum(data) == 0xDDF2


@settings(max_examples=200)
@given(st.binary(max_size=64))
def test_checksum_agrees_with_oracle(data):
    assert internet_checksum(data) == (~ones_complement_sum(data)) & 0xFFFF


@pytest.mark.parametrize("proto", [PROTO_TCP, PROTO_UDP, PROTO_ICMP])
def test_built_frames_have_valid_checksums(proto):
    raw = build_frame(A, T, proto, 1234, 80, payload=b"hello!!")
    assert frame_checksums_valid(raw) == {"ip": True, "l4": True}


def test_decode_fields():
    p = _pkt(A, T, PROTO_UDP, 5353, 53, payload=b"abc")
    assert (p.src_addr, p.dst_addr, p.src_port, p.dst_port) == (A, T, 5353, 53)
    assert p.protocol == "UDP" and p.payload_len == 3 and p.payload_len <= len(p.raw_bytes)


def test_read_write_capture(tmp_path):
    pkts = syn_scan_fixture()[:3]
    path = tmp_path / "three.pcap"
    write_capture(pkts, path)
    back = read_capture(path)
    assert [p.raw_bytes for p in back] == [p.raw_bytes for p in pkts]
    assert [(p.ts_sec, p.ts_usec) for p in back] == [(p.ts_sec, p.ts_usec) for p in pkts]


def test_empty_capture(tmp_path):
    path = tmp_path / "empty.pcap"
    write_capture([], path)
    assert path.stat().st_size == 24
    assert read_capture(path) == []


def test_one_packet_file_length(tmp_path):
    pkt = syn_scan_fixture()[0]
    path = tmp_path / "one.pcap"
    write_capture([pkt], path)
    assert path.stat().st_size == 24 + 16 + len(pkt.raw_bytes)
    head = path.read_bytes()[:24]
    assert struct.unpack("<IHHiIII", head) == (0xA1B2C3D4, 2, 4, 0, 0, 65535, 1)


def test_truncated_record_names_offset(tmp_path):
    pkts = syn_scan_fixture()[:2]
    data = capture_bytes(pkts)
    path = tmp_path / "trunc.pcap"
    path.write_bytes(data[:-5])
    second = 24 + 16 + len(pkts[0].raw_bytes)
    with pytest.raises(PcapError, match=f"offset {second}"):
        read_capture(path)


def test_bad_magic_and_link_type(tmp_path):
    bad = tmp_path / "bad.pcap"
    bad.write_bytes(b"\x00" * 24)
    with pytest.raises(PcapError, match="magic"):
        read_capture(bad)
    raw = bytearray(capture_bytes([]))
    struct.pack_into("<I", raw, 20, 105)
    bad.write_bytes(bytes(raw))
    with pytest.raises(PcapError, match="link"):
        read_capture(bad)


def test_big_endian_capture_is_read(tmp_path):
    pkt = syn_scan_fixture()[0]
    header = struct.pack(">IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, 1)
    rec = struct.pack(">IIII", pkt.ts_sec, pkt.ts_usec, len(pkt.raw_bytes), len(pkt.raw_bytes))
    path = tmp_path / "be.pcap"
    path.write_bytes(header + rec + pkt.raw_bytes)
    assert read_capture(path)[0].raw_bytes == pkt.raw_bytes


def test_strip_responses_fixture():
    pkts = syn_scan_fixture()
    assert len(pkts) == 10
    fwd = strip_responses(pkts, A)
    brute = [p for p in pkts if frame_src(p.raw_bytes) == A]
    assert len(fwd) == 6 and fwd == brute
    assert strip_responses(fwd, A) == fwd
    with pytest.raises(ValidationError):
        strip_responses(pkts, "10.1.1.1")


def test_rewrite_source_fixes_checksums():
    fwd = strip_responses(syn_scan_fixture(), A)
    out = rewrite_source(fwd, "10.9.0.5")
    for before, after in zip(fwd, out):
        assert after.src_addr == "10.9.0.5"
        assert frame_checksums_valid(after.raw_bytes) == {"ip": True, "l4": True}
        assert len(after.raw_bytes) == len(before.raw_bytes)
        assert (after.src_port, after.dst_port, after.protocol, after.ts_sec, after.ts_usec) == \
            (before.src_port, before.dst_port, before.protocol, before.ts_sec, before.ts_usec)
        diff = [i for i, (x, y) in enumerate(zip(before.raw_bytes, after.raw_bytes)) if x != y]
        # only source address, IP checksum and TCP checksum bytes change
        assert set(diff) <= {24, 25, 26, 27, 28, 29, 30, 31, 50, 51}


def test_rewrite_to_same_address_is_identity():
    fwd = strip_responses(syn_scan_fixture(), A)
    assert [p.raw_bytes for p in rewrite_source(fwd, A)] == [p.raw_bytes for p in fwd]


def test_udp_zero_checksum_preserved():
    p = _pkt(A, T, PROTO_UDP, 1, 2, payload=b"x", udp_checksum=False)
    assert struct.unpack_from("!H", p.raw_bytes, 40)[0] == 0
    q = set_source(p, "10.9.0.9")
    assert struct.unpack_from("!H", q.raw_bytes, 40)[0] == 0
    assert frame_checksums_valid(q.raw_bytes) == {"ip": True, "l4": None}


def test_truncated_frame_uses_incremental_update():
    raw = build_frame(A, T, PROTO_TCP, 1, 2, payload=b"y" * 40)
    p = decode_frame(1, 0, raw[:60], orig_len=len(raw))
    q = set_source(p, "10.9.0.9")
    full = set_source(decode_frame(1, 0, raw), "10.9.0.9")
    assert q.raw_bytes == full.raw_bytes[:60]


def test_non_ipv4_rejected():
    frame = b"\x00" * 12 + b"\x86\xdd" + b"\x00" * 40
    with pytest.raises(ValidationError, match="IPv6"):
        set_source(decode_frame(0, 0, frame), "10.0.0.1")


def test_rebase_timestamps():
    pkts = rebase_timestamps(strip_responses(syn_scan_fixture(), A))
    assert (pkts[0].ts_sec, pkts[0].ts_usec) == (0, 0)
    ts = [p.timestamp_us for p in pkts]
    assert ts == sorted(ts)


def test_prepare_trace_pipeline(tmp_path):
    raw = tmp_path / "raw.pcap"
    write_capture(syn_scan_fixture(), raw)
    trace = prepare_trace(raw, AttackType.SYN_SCAN, A, "10.9.0.5", T)
    assert trace.packet_count == 6
    assert all(p.src_addr == "10.9.0.5" and p.dst_addr == T for p in trace.packets)
    assert trace.trace_id == "raw"
    out = tmp_path / "trace.pcap"
    write_trace(trace, out)
    back = read_trace(out, AttackType.SYN_SCAN, T)
    assert [p.raw_bytes for p in back.packets] == [p.raw_bytes for p in trace.packets]


def test_prepare_trace_errors(tmp_path):
    only_resp = tmp_path / "resp.pcap"
    write_capture([p for p in syn_scan_fixture() if p.src_addr == T], only_resp)
    with pytest.raises(ValidationError):
        prepare_trace(only_resp, AttackType.SYN_SCAN, A, "10.9.0.5", T)
    raw = tmp_path / "raw.pcap"
    write_capture(syn_scan_fixture(), raw)
    with pytest.raises(ValidationError):
        prepare_trace(raw, AttackType.SYN_SCAN, A, T, T)


def test_already_forward_trace(tmp_path):
    fwd = rewrite_source(strip_responses(syn_scan_fixture(), A), "10.9.0.5")
    raw = tmp_path / "fwd.pcap"
    write_capture(fwd, raw)
    trace = prepare_trace(raw, AttackType.SYN_SCAN, "10.9.0.5", "10.9.0.5", T)
    assert [p.raw_bytes for p in trace.packets] == [p.raw_bytes for p in fwd]
    assert trace.packets[0].timestamp_us == 0


# -- synthetic captures -----------------------------------------------------


def test_syn_flood_meets_threshold():
    pkts = synth_attack_capture(AttackType.TCP_SYN_FLOOD, 1)
    fwd = [p for p in pkts if p.src_addr == SYNTH_ATTACKER]
    syns = [p for p in fwd if p.raw_bytes[47] & TCP_SYN and p.dst_addr == SYNTH_TARGET]
    assert len(syns) >= 150
    assert {p.dst_addr for p in fwd} == {SYNTH_TARGET}


def test_syn_scan_shape():
    pkts = synth_attack_capture(AttackType.SYN_SCAN, 1)
    fwd = [p for p in pkts if p.src_addr == SYNTH_ATTACKER]
    rev = [p for p in pkts if p.src_addr == SYNTH_TARGET]
    assert len({p.dst_port for p in fwd}) == len(fwd)
    assert all(p.raw_bytes[47] == TCP_SYN for p in fwd)
    assert all(p.raw_bytes[47] in (TCP_SYN | TCP_ACK, TCP_RST | TCP_ACK) for p in rev)
    assert len(rev) == len(fwd)


@pytest.mark.parametrize("kind", list(AttackType))
def test_synth_deterministic_and_two_way(kind):
    a = synth_attack_capture(kind, 5)
    b = synth_attack_capture(kind, 5)
    assert capture_bytes(a) == capture_bytes(b)
    srcs = {p.src_addr for p in a}
    assert srcs == {SYNTH_ATTACKER, SYNTH_TARGET}
    if kind.is_flood:
        assert sum(p.src_addr == SYNTH_ATTACKER for p in a) >= 150
    for p in a:
        checks = frame_checksums_valid(p.raw_bytes)
        assert checks["ip"] and checks["l4"] in (True, None)


def test_write_empty_trace_refused(tmp_path):
    from idsbench.traceprep import AttackTrace
    with pytest.raises(ValidationError):
        AttackTrace("t", AttackType.SYN_SCAN, "10.0.0.1", T, ())
