"""Ethernet/IPv4 frame decoding, construction and checksum maintenance."""

from __future__ import annotations

import ipaddress
import struct
from dataclasses import dataclass, replace

from ..errors import ValidationError

ETH_HEADER_LEN = 14
ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_IPV6 = 0x86DD
ETHERTYPE_VLAN = 0x8100

PROTO_ICMP = 1
PROTO_TCP = 6
PROTO_UDP = 17
_PROTO_NAMES = {PROTO_ICMP: "ICMP", PROTO_TCP: "TCP", PROTO_UDP: "UDP"}

TCP_FIN, TCP_SYN, TCP_RST, TCP_PSH, TCP_ACK = 0x01, 0x02, 0x04, 0x08, 0x10


def internet_checksum(data: bytes) -> int:
    """RFC 1071 checksum: ones-complement of the ones-complement sum."""
    if len(data) % 2:
        data += b"\x00"
    total = sum(struct.unpack(f"!{len(data) // 2}H", data))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def _update_checksum(checksum: int, old: bytes, new: bytes) -> int:
    # RFC 1624 incremental update: HC' = ~(~HC + ~m + m')
    total = ~checksum & 0xFFFF
    for (o,), (n,) in zip(struct.iter_unpack("!H", old), struct.iter_unpack("!H", new)):
        total += (~o & 0xFFFF) + n
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


@dataclass(frozen=True)
class PacketRecord:
    """One captured frame plus the header fields the harness cares about.

    Address/port fields are ``None`` for frames that are not IPv4 (or ports
    for non-TCP/UDP packets).
    """

    ts_sec: int
    ts_usec: int
    raw_bytes: bytes
    orig_len: int
    src_addr: str | None = None
    dst_addr: str | None = None
    src_port: int | None = None
    dst_port: int | None = None
    protocol: str = "OTHER"
    ip_proto: int | None = None
    payload_len: int = 0
    ethertype: int | None = None

    @property
    def timestamp(self) -> float:
        return self.ts_sec + self.ts_usec / 1_000_000

    @property
    def timestamp_us(self) -> int:
        return self.ts_sec * 1_000_000 + self.ts_usec

    @property
    def is_ipv4(self) -> bool:
        return self.ethertype == ETHERTYPE_IPV4 and self.src_addr is not None

    def with_time(self, ts_us: int) -> "PacketRecord":
        return replace(self, ts_sec=ts_us // 1_000_000, ts_usec=ts_us % 1_000_000)


def _ip_offset(raw: bytes) -> tuple[int, int | None]:
    """Return (offset of the L3 header, ethertype) skipping one 802.1Q tag."""
    if len(raw) < ETH_HEADER_LEN:
        return ETH_HEADER_LEN, None
    (ethertype,) = struct.unpack_from("!H", raw, 12)
    offset = ETH_HEADER_LEN
    if ethertype == ETHERTYPE_VLAN and len(raw) >= 18:
        (ethertype,) = struct.unpack_from("!H", raw, 16)
        offset = 18
    return offset, ethertype


def decode_frame(ts_sec: int, ts_usec: int, raw: bytes, orig_len: int | None = None) -> PacketRecord:
    """Decode an Ethernet frame; anything not IPv4 is kept opaque."""
    raw = bytes(raw)
    if orig_len is None:
        orig_len = len(raw)
    off, ethertype = _ip_offset(raw)
    base = PacketRecord(ts_sec, ts_usec, raw, orig_len, ethertype=ethertype,
                        payload_len=max(len(raw) - off, 0))
    if ethertype != ETHERTYPE_IPV4 or len(raw) < off + 20:
        return base
    ver_ihl = raw[off]
    ihl = (ver_ihl & 0x0F) * 4
    if ver_ihl >> 4 != 4 or ihl < 20 or len(raw) < off + ihl:
        return base
    total_len, frag = struct.unpack_from("!H2xH", raw, off + 2)
    proto = raw[off + 9]
    src = str(ipaddress.IPv4Address(raw[off + 12:off + 16]))
    dst = str(ipaddress.IPv4Address(raw[off + 16:off + 20]))
    ip_end = min(off + total_len, len(raw))
    l4 = off + ihl
    sport = dport = None
    payload_len = max(ip_end - l4, 0)
    first_fragment = (frag & 0x1FFF) == 0
    if proto == PROTO_TCP and first_fragment and ip_end >= l4 + 20:
        sport, dport = struct.unpack_from("!HH", raw, l4)
        data_off = (raw[l4 + 12] >> 4) * 4
        payload_len = max(ip_end - l4 - data_off, 0)
    elif proto == PROTO_UDP and first_fragment and ip_end >= l4 + 8:
        sport, dport = struct.unpack_from("!HH", raw, l4)
        payload_len = max(ip_end - l4 - 8, 0)
    elif proto == PROTO_ICMP and ip_end >= l4 + 8:
        payload_len = ip_end - l4 - 8
    payload_len = min(payload_len, len(raw))
    return replace(
        base, src_addr=src, dst_addr=dst, src_port=sport, dst_port=dport,
        protocol=_PROTO_NAMES.get(proto, "OTHER"), ip_proto=proto, payload_len=payload_len)


def _transport_checksum_offset(proto: int) -> int | None:
    if proto == PROTO_TCP:
        return 16
    if proto == PROTO_UDP:
        return 6
    return None


def _pseudo_header(src: bytes, dst: bytes, proto: int, length: int) -> bytes:
    return src + dst + struct.pack("!BBH", 0, proto, length)


def fill_checksums(frame: bytearray, ip_off: int = ETH_HEADER_LEN) -> None:
    """Recompute IPv4 header and TCP/UDP checksums of ``frame`` in place.

    A UDP checksum of zero means "not computed" and is left alone.
    """
    ihl = (frame[ip_off] & 0x0F) * 4
    frame[ip_off + 10:ip_off + 12] = b"\x00\x00"
    struct.pack_into("!H", frame, ip_off + 10, internet_checksum(bytes(frame[ip_off:ip_off + ihl])))
    proto = frame[ip_off + 9]
    csum_off = _transport_checksum_offset(proto)
    if csum_off is None:
        return
    (total_len,) = struct.unpack_from("!H", frame, ip_off + 2)
    l4 = ip_off + ihl
    seg_len = total_len - ihl
    pos = l4 + csum_off
    if proto == PROTO_UDP and frame[pos:pos + 2] == b"\x00\x00":
        return
    frame[pos:pos + 2] = b"\x00\x00"
    pseudo = _pseudo_header(bytes(frame[ip_off + 12:ip_off + 16]),
                            bytes(frame[ip_off + 16:ip_off + 20]), proto, seg_len)
    csum = internet_checksum(pseudo + bytes(frame[l4:l4 + seg_len]))
    if proto == PROTO_UDP and csum == 0:
        csum = 0xFFFF
    struct.pack_into("!H", frame, pos, csum)


def set_source(packet: PacketRecord, new_src: str) -> PacketRecord:
    """Return ``packet`` with its IPv4 source replaced and checksums fixed.

    Complete, unfragmented TCP/UDP segments get their checksum recomputed
    from scratch; fragments and snap-truncated frames fall back to an
    incremental update because the full segment is not available.
    """
    if not packet.is_ipv4:
        kind = "IPv6" if packet.ethertype == ETHERTYPE_IPV6 else "non-IPv4"
        raise ValidationError(
            f"{kind} packet at t={packet.ts_sec}.{packet.ts_usec:06d}; only IPv4 is supported")
    if packet.src_addr == new_src:
        return packet
    new_bytes = ipaddress.IPv4Address(new_src).packed
    frame = bytearray(packet.raw_bytes)
    off, _ = _ip_offset(frame)
    ihl = (frame[off] & 0x0F) * 4
    old_bytes = bytes(frame[off + 12:off + 16])
    frame[off + 12:off + 16] = new_bytes
    (total_len, frag) = struct.unpack_from("!H2xH", frame, off + 2)
    proto = frame[off + 9]
    complete = off + total_len <= len(frame) and packet.orig_len == len(packet.raw_bytes)
    unfragmented = (frag & 0x3FFF) == 0
    if complete and unfragmented:
        fill_checksums(frame, off)
    else:
        frame[off + 10:off + 12] = b"\x00\x00"
        struct.pack_into("!H", frame, off + 10,
                         internet_checksum(bytes(frame[off:off + ihl])))
        csum_off = _transport_checksum_offset(proto)
        pos = off + ihl + (csum_off or 0)
        if csum_off is not None and (frag & 0x1FFF) == 0 and pos + 2 <= len(frame):
            (old_csum,) = struct.unpack_from("!H", frame, pos)
            if not (proto == PROTO_UDP and old_csum == 0):
                new_csum = _update_checksum(old_csum, old_bytes, new_bytes)
                if proto == PROTO_UDP and new_csum == 0:
                    new_csum = 0xFFFF
                struct.pack_into("!H", frame, pos, new_csum)
    return decode_frame(packet.ts_sec, packet.ts_usec, bytes(frame), packet.orig_len)


# -- construction (fixtures and the synthetic capture generator) ----------

_MAC_A = bytes.fromhex("02000000000a")
_MAC_B = bytes.fromhex("02000000000b")


def build_frame(
    src: str,
    dst: str,
    proto: int,
    sport: int = 0,
    dport: int = 0,
    *,
    flags: int = 0,
    seq: int = 0,
    ack: int = 0,
    payload: bytes = b"",
    ttl: int = 64,
    ident: int = 0,
    window: int = 64240,
    tcp_options: bytes = b"",
    icmp_type: int = 8,
    icmp_code: int = 0,
    udp_checksum: bool = True,
) -> bytes:
    """Build an Ethernet/IPv4 frame with valid checksums."""
    src_b = ipaddress.IPv4Address(src).packed
    dst_b = ipaddress.IPv4Address(dst).packed
    if proto == PROTO_TCP:
        if len(tcp_options) % 4:
            tcp_options += b"\x00" * (4 - len(tcp_options) % 4)
        data_off = (20 + len(tcp_options)) // 4
        l4 = struct.pack("!HHIIBBHHH", sport, dport, seq, ack, data_off << 4, flags,
                         window, 0, 0) + tcp_options + payload
    elif proto == PROTO_UDP:
        l4 = struct.pack("!HHHH", sport, dport, 8 + len(payload), 0) + payload
    elif proto == PROTO_ICMP:
        body = struct.pack("!BBHHH", icmp_type, icmp_code, 0, ident, seq & 0xFFFF) + payload
        csum = internet_checksum(body)
        l4 = body[:2] + struct.pack("!H", csum) + body[4:]
    else:
        l4 = payload
    ip = struct.pack("!BBHHHBBH4s4s", 0x45, 0, 20 + len(l4), ident, 0x4000, ttl, proto, 0,
                     src_b, dst_b)
    eth = (_MAC_B + _MAC_A) if src < dst else (_MAC_A + _MAC_B)
    frame = bytearray(eth + struct.pack("!H", ETHERTYPE_IPV4) + ip + l4)
    if proto == PROTO_UDP and udp_checksum:
        # Non-zero placeholder so fill_checksums computes it.
        struct.pack_into("!H", frame, ETH_HEADER_LEN + 20 + 6, 0xFFFF)
    fill_checksums(frame)
    return bytes(frame)
