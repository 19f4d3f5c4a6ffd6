"""Deterministic mock IDS reproducing the observed behavioural regimes.

Throughput above ``capacity_gbps`` is dropped (a hard cap, not a queue),
attack instances survive with the interval's analyzed fraction, and detection
degrades as the number of attacks per minute rises above a knee. All random
choices are hashes of instance identity, so reruns give identical output.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from .._num import format_decimal
from ..errors import ValidationError
from ..plan import AttackType, ExpectationProfile, MessageMapping
from .eve import format_eve_stats
from .fastlog import format_fast_line
from .records import AlertRecord, quantize_us
from .stats import format_snort_stats

GBIT = 10**9
MB = 10**6

SNORT_LIKE = "snort_like"
SURICATA_LIKE = "suricata_like"

_UDP_TYPES = {AttackType.UDP_FLOOD, AttackType.UDP_SCAN}


def unit_hash(*parts) -> Fraction:
    """Map ``parts`` to a reproducible value in [0, 1)."""
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode()).digest()
    return Fraction(int.from_bytes(digest[:8], "big"), 2**64)


@dataclass(frozen=True)
class AttackOffer:
    """One attack instance replayed during an interval."""

    trace_id: str
    attack_type: AttackType
    source_address: str
    target_address: str
    packets: int
    bytes: int
    due: Fraction          # logical seconds since evaluation start
    minute: int
    concurrent: int        # attacks scheduled in the same minute


@dataclass(frozen=True)
class OfferedInterval:
    index: int
    t: Fraction            # interval start, logical seconds since evaluation start
    epoch: Fraction        # interval start as (virtual) wall-clock time
    duration: Fraction
    background_packets: int
    background_bytes: int
    attacks: tuple[AttackOffer, ...] = ()

    @property
    def packets(self) -> int:
        return self.background_packets + sum(a.packets for a in self.attacks)

    @property
    def bytes(self) -> int:
        return self.background_bytes + sum(a.bytes for a in self.attacks)

    @property
    def gbps(self) -> Fraction:
        return Fraction(8 * self.bytes, GBIT) / self.duration


@dataclass
class MockIdsConfig:
    capacity_gbps: Fraction = Fraction(1)
    detection_table: Mapping[AttackType, tuple[str, ...]] = field(default_factory=dict)
    detection_degradation: Fraction = Fraction(0)
    degradation_knee: int = 0
    stats_style: str = SURICATA_LIKE
    memory_footprint: int = 80 * MB
    ready_delay: float | None = 0.0      # logical seconds; None never signals READY
    base_cpu: Fraction = Fraction(1, 2)
    cores: int = 4
    flood_alert_threshold: int = 150
    alert_latency: Fraction = Fraction(0)
    aliases: MessageMapping | None = None

    def __post_init__(self):
        self.capacity_gbps = Fraction(self.capacity_gbps)
        self.detection_degradation = Fraction(self.detection_degradation)
        self.base_cpu = Fraction(self.base_cpu)
        self.alert_latency = Fraction(self.alert_latency)
        if self.capacity_gbps <= 0:
            raise ValidationError(f"capacity_gbps must be > 0, got {self.capacity_gbps}")
        if not 0 <= self.detection_degradation < 1:
            raise ValidationError(
                f"detection_degradation must be in [0, 1), got {self.detection_degradation}")
        if self.stats_style not in (SNORT_LIKE, SURICATA_LIKE):
            raise ValidationError(f"unknown stats_style {self.stats_style!r}")
        if self.cores < 1:
            raise ValidationError("cores must be >= 1")

    @classmethod
    def from_profile(cls, profile: ExpectationProfile, style: str = SURICATA_LIKE, **kw):
        """Detection table = the priority-0 messages of each attack type.

        Style presets: suricata-like caps at 1 Gbit/s with an 80 MB footprint,
        snort-like keeps up to 10 Gbit/s with 6 MB.
        """
        table = {}
        for kind in AttackType:
            table[kind] = tuple(e.prefix for e in profile.required(kind))
        if style == SURICATA_LIKE:
            kw.setdefault("capacity_gbps", Fraction(1))
            kw.setdefault("memory_footprint", 80 * MB)
        else:
            kw.setdefault("capacity_gbps", Fraction(10))
            kw.setdefault("memory_footprint", 6 * MB)
        return cls(detection_table=table, stats_style=style, **kw)

    def suppression(self, concurrent: int) -> Fraction:
        excess = max(0, concurrent - self.degradation_knee)
        return min(Fraction(1), self.detection_degradation * excess)


@dataclass
class IntervalResult:
    index: int
    offered_packets: int
    received: int
    dropped: int
    offered_gbps: Fraction
    analyzed_gbps: Fraction
    cpu: tuple[Fraction, ...]


@dataclass
class MockRun:
    alerts: list[AlertRecord] = field(default_factory=list)
    alert_lines: list[str] = field(default_factory=list)
    stats_lines: list[str] = field(default_factory=list)
    monitor_lines: list[str] = field(default_factory=list)
    truth_lines: list[str] = field(default_factory=list)
    intervals: list[IntervalResult] = field(default_factory=list)
    analyzed: list[tuple[str, str]] = field(default_factory=list)
    dropped_instances: list[tuple[str, str]] = field(default_factory=list)
    observed_sources: set[str] = field(default_factory=set)


class MockIdsEngine:
    """Consumes offered intervals one at a time and accumulates output lines."""

    def __init__(self, config: MockIdsConfig):
        self.config = config
        self.run = MockRun()
        self._received = 0
        self._dropped = 0

    def _sid(self, message: str) -> str:
        return f"1:{1_000_000 + int(unit_hash('sid', message) * 100_000)}:1"

    def _message_variant(self, message: str, a: AttackOffer) -> str:
        aliases = self.config.aliases
        if aliases is None or message not in aliases.classes:
            return message
        members = sorted(aliases.members(message))
        return members[int(unit_hash("alias", a.trace_id, a.source_address) * len(members))]

    def _detect(self, a: AttackOffer, t0: Fraction) -> list[AlertRecord]:
        cfg = self.config
        if a.attack_type.is_flood and a.packets < cfg.flood_alert_threshold:
            return []
        p = cfg.suppression(a.concurrent)
        alerts = []
        for message in cfg.detection_table.get(a.attack_type, ()):
            if unit_hash("suppress", a.trace_id, a.source_address, message) < p:
                continue
            text = self._message_variant(message, a)
            alerts.append(AlertRecord(
                t=quantize_us(a.due + cfg.alert_latency),
                message=text,
                src_addr=a.source_address,
                dst_addr=a.target_address,
                protocol="UDP" if a.attack_type in _UDP_TYPES else "TCP",
                sid=self._sid(text),
            ))
        return alerts

    def process(self, interval: OfferedInterval) -> IntervalResult:
        cfg = self.config
        run = self.run
        offered_gbps = interval.gbps
        if offered_gbps <= cfg.capacity_gbps:
            fraction = Fraction(1)
        else:
            fraction = cfg.capacity_gbps / offered_gbps
        total = interval.packets
        received = math.floor(total * fraction)
        dropped = total - received
        self._received += received
        self._dropped += dropped

        t0 = interval.epoch - interval.t
        for a in sorted(interval.attacks, key=lambda a: (a.due, a.source_address)):
            run.observed_sources.add(a.source_address)
            ident = (a.trace_id, a.source_address)
            if unit_hash("analyze", *ident) < fraction:
                run.analyzed.append(ident)
                run.truth_lines.append(f"{a.minute} {a.trace_id} {a.source_address} analyzed")
                for alert in self._detect(a, t0):
                    run.alerts.append(alert)
                    run.alert_lines.append(format_fast_line(alert, t0))
            else:
                run.dropped_instances.append(ident)
                run.truth_lines.append(f"{a.minute} {a.trace_id} {a.source_address} dropped")

        end_t = interval.t + interval.duration
        end_epoch = interval.epoch + interval.duration
        if cfg.stats_style == SURICATA_LIKE:
            run.stats_lines.append(
                format_eve_stats(end_epoch, self._received, self._dropped, uptime=int(end_t)))
        else:
            run.stats_lines.append(
                format_snort_stats(end_epoch, self._received / end_t, self._dropped / end_t))

        load = min(Fraction(1), offered_gbps / cfg.capacity_gbps * cfg.base_cpu)
        cpu = (load,) * cfg.cores
        run.monitor_lines.append(
            f"{format_decimal(end_epoch, 6)} CPU {' '.join(format_decimal(c, 6) for c in cpu)}"
            f" | MEM {cfg.memory_footprint} | NET {interval.bytes} 0")
        result = IntervalResult(interval.index, total, received, dropped, offered_gbps,
                                offered_gbps * fraction, cpu)
        run.intervals.append(result)
        return result

    def idle_monitor_line(self, epoch) -> str:
        cfg = self.config
        zeros = " ".join("0" for _ in range(cfg.cores))
        return f"{format_decimal(Fraction(epoch), 6)} CPU {zeros} | MEM {cfg.memory_footprint} | NET 0 0"


def mock_ids_run(config: MockIdsConfig, offered: Iterable[OfferedInterval]) -> MockRun:
    engine = MockIdsEngine(config)
    for interval in offered:
        engine.process(interval)
    return engine.run
