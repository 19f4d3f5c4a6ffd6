"""Per-sample result values and their aggregation into report CSVs.

Ratios are exact ``Fraction``s; ``None`` marks a ratio whose denominator is
zero and is written as ``undefined``. Pooling always sums the counts first
and divides afterwards.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from ._num import format_decimal, format_exact
from .adapters.stats import PacketTotals
from .errors import ValidationError
from .matcher import DetectionCounts, MatchTable
from .monitor import ResourceSummary

UNDEFINED = "undefined"
REPORT_HEADER = ["key", "tp", "fp", "fn", "tpr", "precision", "far", "cpu_avg", "mem_avg",
                 "rp", "dp", "sp", "unconsidered"]


def ratio(num, den) -> Fraction | None:
    return Fraction(num, den) if den else None


@dataclass(frozen=True, order=True)
class SampleKey:
    bandwidth: Fraction
    attacks_per_minute: int
    ids_id: str

    def __post_init__(self):
        object.__setattr__(self, "bandwidth", Fraction(self.bandwidth))
        if self.bandwidth <= 0:
            raise ValidationError("bandwidth must be positive")
        if self.attacks_per_minute < 1:
            raise ValidationError("attacks_per_minute must be >= 1")

    def label(self) -> str:
        return f"{self.ids_id}:bw={format_exact(self.bandwidth)}:apm={self.attacks_per_minute}"


@dataclass(frozen=True)
class SentTotals:
    elapsed: Fraction
    packets: Fraction


@dataclass(frozen=True)
class SampleMetrics:
    tp: int
    fp: int
    fn: int
    tpr: Fraction | None
    far: Fraction | None
    precision: Fraction | None
    cpu_avg: Fraction | None = None
    memory_avg: Fraction | None = None
    received_pkts_avg: Fraction | None = None
    drop_rate_avg: Fraction | None = None
    sent_pkts_avg: Fraction | None = None
    unconsidered_pkts: int | None = None
    # Pooling bookkeeping: totals the averages above were derived from.
    resource_samples: int = 0
    ids_elapsed: Fraction = Fraction(0)
    received_total: Fraction = Fraction(0)
    dropped_total: Fraction = Fraction(0)
    sent_elapsed: Fraction = Fraction(0)
    sent_total: Fraction = Fraction(0)
    flags: tuple[str, ...] = ()

    @property
    def counts(self) -> DetectionCounts:
        return DetectionCounts(self.tp, self.fp, self.fn)


def _rates(counts: DetectionCounts):
    tp, fp, fn = counts.tp, counts.fp, counts.fn
    return ratio(tp, tp + fn), ratio(fp, tp + fp), ratio(tp, tp + fp)


def _packet_figures(ids_elapsed, received, dropped, sent_elapsed, sent, have_ids, have_sent):
    rp = received / ids_elapsed if have_ids and ids_elapsed else None
    dp = ratio_frac(dropped, received + dropped) if have_ids else None
    sp = sent / sent_elapsed if have_sent and sent_elapsed else None
    unconsidered = None
    flags = []
    if have_ids and have_sent:
        unconsidered = round(sent - received)
        if unconsidered < 0:
            flags.append("negative_unconsidered")
    return rp, dp, sp, unconsidered, flags


def ratio_frac(num: Fraction, den: Fraction) -> Fraction | None:
    return Fraction(num) / Fraction(den) if den else None


def compute_sample(counts: DetectionCounts, resources: ResourceSummary | None = None,
                   stats: PacketTotals | None = None, sent: SentTotals | None = None
                   ) -> SampleMetrics:
    tpr, far, precision = _rates(counts)
    ids_elapsed = stats.elapsed if stats else Fraction(0)
    received = stats.received if stats else Fraction(0)
    dropped = stats.dropped if stats else Fraction(0)
    sent_elapsed = sent.elapsed if sent else Fraction(0)
    sent_total = Fraction(sent.packets) if sent else Fraction(0)
    rp, dp, sp, unconsidered, flags = _packet_figures(
        ids_elapsed, received, dropped, sent_elapsed, sent_total, stats is not None,
        sent is not None)
    return SampleMetrics(
        counts.tp, counts.fp, counts.fn, tpr, far, precision,
        cpu_avg=resources.cpu_overall if resources else None,
        memory_avg=resources.memory_avg if resources else None,
        received_pkts_avg=rp, drop_rate_avg=dp, sent_pkts_avg=sp,
        unconsidered_pkts=unconsidered,
        resource_samples=resources.samples if resources else 0,
        ids_elapsed=ids_elapsed, received_total=received, dropped_total=dropped,
        sent_elapsed=sent_elapsed, sent_total=sent_total, flags=tuple(flags),
    )


def _weighted(pairs):
    pairs = [(v, w) for v, w in pairs if v is not None and w]
    total = sum(w for _, w in pairs)
    return sum(v * w for v, w in pairs) / total if total else None


def pool(metrics: Sequence[SampleMetrics]) -> SampleMetrics:
    """Combine metrics: counts and packet totals summed, resources sample-weighted."""
    if not metrics:
        raise ValidationError("nothing to pool")
    if len(metrics) == 1:
        return metrics[0]
    counts = DetectionCounts()
    for m in metrics:
        counts = counts + m.counts
    tpr, far, precision = _rates(counts)
    have_ids = any(m.received_pkts_avg is not None or m.drop_rate_avg is not None
                   for m in metrics)
    have_sent = any(m.sent_pkts_avg is not None for m in metrics)
    ids_elapsed = sum(m.ids_elapsed for m in metrics)
    received = sum(m.received_total for m in metrics)
    dropped = sum(m.dropped_total for m in metrics)
    sent_elapsed = sum(m.sent_elapsed for m in metrics)
    sent = sum(m.sent_total for m in metrics)
    rp, dp, sp, unconsidered, flags = _packet_figures(
        ids_elapsed, received, dropped, sent_elapsed, sent, have_ids, have_sent)
    flags = sorted(set(flags).union(*(m.flags for m in metrics)))
    return SampleMetrics(
        counts.tp, counts.fp, counts.fn, tpr, far, precision,
        cpu_avg=_weighted((m.cpu_avg, m.resource_samples) for m in metrics),
        memory_avg=_weighted((m.memory_avg, m.resource_samples) for m in metrics),
        received_pkts_avg=rp, drop_rate_avg=dp, sent_pkts_avg=sp,
        unconsidered_pkts=unconsidered,
        resource_samples=sum(m.resource_samples for m in metrics),
        ids_elapsed=ids_elapsed, received_total=received, dropped_total=dropped,
        sent_elapsed=sent_elapsed, sent_total=sent, flags=tuple(flags),
    )


@dataclass
class TestResult:
    """Everything one processed test contributes to its sample."""

    key: SampleKey
    counts: DetectionCounts
    resources: ResourceSummary | None = None
    stats: PacketTotals | None = None
    sent: SentTotals | None = None
    table: MatchTable | None = field(default=None, repr=False)

    __test__ = False

    def metrics(self) -> SampleMetrics:
        return compute_sample(self.counts, self.resources, self.stats, self.sent)


def aggregate(tests: Sequence[TestResult]) -> SampleMetrics:
    if not tests:
        raise ValidationError("aggregate needs at least one test")
    keys = {t.key for t in tests}
    if len(keys) > 1:
        raise ValidationError(f"mixed sample keys: {sorted(k.label() for k in keys)}")
    return pool([t.metrics() for t in tests])


def _cell(value, missing="") -> str:
    if value is None:
        return missing
    return format_decimal(value, 6)


def metrics_row(label: str, m: SampleMetrics) -> list[str]:
    return [
        label, str(m.tp), str(m.fp), str(m.fn),
        _cell(m.tpr, UNDEFINED), _cell(m.precision, UNDEFINED), _cell(m.far, UNDEFINED),
        _cell(m.cpu_avg), _cell(m.memory_avg), _cell(m.received_pkts_avg),
        _cell(m.drop_rate_avg), _cell(m.sent_pkts_avg),
        "" if m.unconsidered_pkts is None else str(m.unconsidered_pkts),
    ]


def metrics_csv(rows: Iterable[tuple[str, SampleMetrics]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    for label, m in rows:
        w.writerow(metrics_row(label, m))
    return buf.getvalue()


def grid_report(samples: Mapping[SampleKey, SampleMetrics], out_dir) -> dict[str, Path]:
    """Write bandwidth-series, attack-series and full-grid CSVs.

    The bandwidth series pools every attack rate per (IDS, bandwidth); the
    attack series pools every bandwidth per (IDS, attack rate).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_bw: dict[tuple, list[SampleMetrics]] = {}
    by_apm: dict[tuple, list[SampleMetrics]] = {}
    for key in sorted(samples):
        by_bw.setdefault((key.ids_id, key.bandwidth), []).append(samples[key])
        by_apm.setdefault((key.ids_id, key.attacks_per_minute), []).append(samples[key])
    files = {
        "bandwidth": (out_dir / "bandwidth_series.csv", [
            (f"{ids}:bw={format_exact(bw)}", pool(ms)) for (ids, bw), ms in sorted(by_bw.items())]),
        "attacks": (out_dir / "attack_series.csv", [
            (f"{ids}:apm={apm}", pool(ms)) for (ids, apm), ms in sorted(by_apm.items())]),
        "grid": (out_dir / "grid.csv", [(k.label(), samples[k]) for k in sorted(samples)]),
    }
    out = {}
    for name, (path, rows) in files.items():
        path.write_text(metrics_csv(rows), encoding="utf-8")
        out[name] = path
    return out
