"""IDS packet statistics: Snort-style runtime averages and cumulative totals."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from .._num import format_decimal, parse_fraction
from ..errors import ParseError, ValidationError
from .eve import parse_suricata_eve
from .records import IdsStatsRecord, StatsSemantics


def to_runtime_averages(stats: Sequence[IdsStatsRecord]) -> list[IdsStatsRecord]:
    """Convert cumulative counters into ``total(t) / t`` rates.

    Records at ``t <= 0`` carry no rate information and are dropped.
    """
    if not stats:
        return []
    kinds = {s.semantics for s in stats}
    if len(kinds) > 1:
        raise ValidationError("mixed stats semantics in one series")
    if kinds == {StatsSemantics.RUNTIME_AVERAGE_RATE}:
        return list(stats)
    out = []
    prev = None
    for s in stats:
        if prev is not None and (s.received < prev.received or s.dropped < prev.dropped):
            raise ValidationError(
                f"cumulative counter decreased at t={s.t} (counter reset unsupported)")
        prev = s
        if s.t <= 0:
            continue
        out.append(IdsStatsRecord(s.t, s.received / s.t, s.dropped / s.t,
                                  StatsSemantics.RUNTIME_AVERAGE_RATE))
    return out


@dataclass(frozen=True)
class PacketTotals:
    """Run-level packet figures recovered from a stats series."""

    elapsed: Fraction
    received: Fraction
    dropped: Fraction

    @property
    def received_rate(self) -> Fraction | None:
        return self.received / self.elapsed if self.elapsed else None

    @property
    def dropped_rate(self) -> Fraction | None:
        return self.dropped / self.elapsed if self.elapsed else None


def packet_totals(stats: Sequence[IdsStatsRecord]) -> PacketTotals:
    """Totals at the last sample. A runtime average times its time is the total."""
    averages = to_runtime_averages(stats)
    if not averages:
        return PacketTotals(Fraction(0), Fraction(0), Fraction(0))
    last = averages[-1]
    return PacketTotals(last.t, last.received * last.t, last.dropped * last.t)


def parse_snort_stats(path, t0=0) -> list[IdsStatsRecord]:
    """Read ``t received_avg dropped_avg`` lines (``t`` re-based against ``t0``)."""
    path = Path(path)
    out = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(f"expected 't received_avg dropped_avg', got {line!r}",
                             str(path), lineno)
        try:
            t, rec, drop = (parse_fraction(p) for p in parts)
        except ValueError as exc:
            raise ParseError(str(exc), str(path), lineno) from None
        out.append(IdsStatsRecord(t - Fraction(t0), rec, drop,
                                  StatsSemantics.RUNTIME_AVERAGE_RATE))
    return out


def format_snort_stats(epoch, received_avg, dropped_avg) -> str:
    return (f"{format_decimal(Fraction(epoch), 6)} {format_decimal(received_avg, 6)} "
            f"{format_decimal(dropped_avg, 6)}")


def load_ids_stats(path, t0) -> list[IdsStatsRecord]:
    """Read either stats flavour, sniffing JSON lines vs. whitespace text."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    first = next((ln.strip() for ln in text.splitlines() if ln.strip()), "")
    if first.startswith("{"):
        _, stats = parse_suricata_eve(path, t0)
        return stats
    return parse_snort_stats(path, t0)
