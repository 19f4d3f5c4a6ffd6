"""Turn a raw attack capture into a replay-ready, labeled trace."""

from __future__ import annotations

import ipaddress
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from ..errors import ValidationError
from ..plan import AttackType
from .packets import PacketRecord, set_source
from .pcap import read_capture, write_capture

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AttackTrace:
    trace_id: str
    attack_type: AttackType
    source_address: str
    target_address: str
    packets: tuple[PacketRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "packets", tuple(self.packets))
        if not self.packets:
            raise ValidationError(f"trace {self.trace_id!r} has no packets")
        for p in self.packets:
            if p.src_addr != self.source_address:
                raise ValidationError(
                    f"trace {self.trace_id!r}: packet from {p.src_addr}, "
                    f"expected only {self.source_address}")

    @property
    def packet_count(self) -> int:
        return len(self.packets)

    @property
    def byte_count(self) -> int:
        return sum(p.orig_len for p in self.packets)


def _check_ipv4(addr: str, what: str) -> str:
    try:
        return str(ipaddress.IPv4Address(addr))
    except ValueError:
        raise ValidationError(f"{what} is not an IPv4 address: {addr!r}") from None


def strip_responses(packets: Sequence[PacketRecord], attacker_addr: str) -> list[PacketRecord]:
    """Keep only packets sent by ``attacker_addr``, in order."""
    attacker_addr = _check_ipv4(attacker_addr, "attacker address")
    kept = [p for p in packets if p.src_addr == attacker_addr]
    if not kept:
        raise ValidationError(f"no packets from attacker {attacker_addr} in capture")
    return kept


def rewrite_source(packets: Sequence[PacketRecord], new_src: str) -> list[PacketRecord]:
    new_src = _check_ipv4(new_src, "new source")
    return [set_source(p, new_src) for p in packets]


def rebase_timestamps(packets: Sequence[PacketRecord]) -> list[PacketRecord]:
    """Stable-sort by capture time and shift so the first packet is at t=0."""
    ordered = sorted(packets, key=lambda p: p.timestamp_us)
    if not ordered:
        return []
    t0 = ordered[0].timestamp_us
    return [p.with_time(p.timestamp_us - t0) for p in ordered]


def prepare_trace(raw_path, attack_type: AttackType, attacker_addr: str, new_src: str,
                  target_addr: str, trace_id: str | None = None) -> AttackTrace:
    target_addr = _check_ipv4(target_addr, "target address")
    new_src = _check_ipv4(new_src, "new source")
    if new_src == target_addr:
        raise ValidationError(f"new source {new_src} equals the target address")
    raw = read_capture(raw_path)
    forward = strip_responses(raw, attacker_addr)
    log.info("%s: %d packets, %d after stripping responses", raw_path, len(raw), len(forward))
    packets = rebase_timestamps(rewrite_source(forward, new_src))
    return AttackTrace(
        trace_id=trace_id or Path(raw_path).stem,
        attack_type=attack_type,
        source_address=new_src,
        target_address=target_addr,
        packets=tuple(packets),
    )


def write_trace(trace: AttackTrace, path) -> None:
    if not trace.packets:
        raise ValidationError("refusing to write an empty trace")
    write_capture(trace.packets, path)


def read_trace(path, attack_type: AttackType, target_addr: str,
               trace_id: str | None = None) -> AttackTrace:
    """Load a prepared trace back; its source is taken from the first packet."""
    packets = read_capture(path)
    if not packets:
        raise ValidationError(f"{path}: empty trace")
    return AttackTrace(trace_id or Path(path).stem, attack_type, packets[0].src_addr,
                       target_addr, tuple(packets))
