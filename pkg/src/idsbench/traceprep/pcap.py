"""Classic (libpcap 2.4) capture files. pcapng is not supported."""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable

from ..errors import PcapError
from .packets import PacketRecord, decode_frame

PCAP_MAGIC = 0xA1B2C3D4
PCAP_MAGIC_NS = 0xA1B23C4D
GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16
LINKTYPE_ETHERNET = 1
DEFAULT_SNAPLEN = 65535


def read_capture(path) -> list[PacketRecord]:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < GLOBAL_HEADER_LEN:
        raise PcapError(f"file too short for a pcap global header ({len(data)} bytes)", str(path))
    magic_le = struct.unpack_from("<I", data)[0]
    magic_be = struct.unpack_from(">I", data)[0]
    if magic_le in (PCAP_MAGIC, PCAP_MAGIC_NS):
        endian, magic = "<", magic_le
    elif magic_be in (PCAP_MAGIC, PCAP_MAGIC_NS):
        endian, magic = ">", magic_be
    else:
        raise PcapError(f"bad magic 0x{magic_le:08x}", str(path))
    nanos = magic == PCAP_MAGIC_NS
    _, _, _, _, _, linktype = struct.unpack_from(endian + "HHiIII", data, 4)
    if linktype != LINKTYPE_ETHERNET:
        raise PcapError(f"unsupported link type {linktype} (only Ethernet/1)", str(path))

    records = []
    offset = GLOBAL_HEADER_LEN
    hdr = endian + "IIII"
    while offset < len(data):
        if offset + RECORD_HEADER_LEN > len(data):
            raise PcapError(f"truncated record header at byte offset {offset}", str(path))
        ts_sec, ts_frac, incl_len, orig_len = struct.unpack_from(hdr, data, offset)
        body = offset + RECORD_HEADER_LEN
        if body + incl_len > len(data):
            raise PcapError(
                f"truncated record at byte offset {offset}: needs {incl_len} bytes, "
                f"{len(data) - body} available", str(path))
        ts_usec = ts_frac // 1000 if nanos else ts_frac
        records.append(decode_frame(ts_sec, ts_usec, data[body:body + incl_len], orig_len))
        offset = body + incl_len
    return records


def capture_bytes(packets: Iterable[PacketRecord], snaplen: int = DEFAULT_SNAPLEN) -> bytes:
    out = [struct.pack("<IHHiIII", PCAP_MAGIC, 2, 4, 0, 0, snaplen, LINKTYPE_ETHERNET)]
    for p in packets:
        out.append(struct.pack("<IIII", p.ts_sec, p.ts_usec, len(p.raw_bytes), p.orig_len))
        out.append(p.raw_bytes)
    return b"".join(out)


def write_capture(packets: Iterable[PacketRecord], path, snaplen: int = DEFAULT_SNAPLEN) -> None:
    Path(path).write_bytes(capture_bytes(packets, snaplen))
