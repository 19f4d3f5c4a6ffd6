"""Resource and bandwidth monitoring: parsing, unit normalization, alignment.

Monitor log line::

    <epoch_seconds> CPU <c0> <c1> ... | MEM <bytes> | NET <bytes_in> <bytes_out>

Bandwidth log line::

    <t> <value>

Absent data stays ``None`` all the way to the CSV (empty cell); it is never
treated as zero.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from ._num import format_decimal, parse_fraction
from .errors import ParseError, ValidationError

ROLES = ("sender", "receiver", "ids")

UNIT_TO_GBPS = {
    "bit/s": Fraction(1, 10**9),
    "Kbit/s": Fraction(1, 10**6),
    "Mbit/s": Fraction(1, 10**3),
    "Gbit/s": Fraction(1),
    "byte/s": Fraction(8, 10**9),
}


@dataclass(frozen=True)
class MonitorSample:
    t: Fraction
    cpu_per_core: tuple[Fraction, ...]
    memory: int
    bytes_in: int
    bytes_out: int

    def __post_init__(self):
        object.__setattr__(self, "t", Fraction(self.t))
        object.__setattr__(self, "cpu_per_core", tuple(Fraction(c) for c in self.cpu_per_core))
        for c in self.cpu_per_core:
            if not 0 <= c <= 1:
                raise ValidationError(f"cpu fraction {c} outside [0, 1] at t={self.t}")
        if self.memory < 0 or self.bytes_in < 0 or self.bytes_out < 0:
            raise ValidationError(f"negative counter at t={self.t}")


def parse_monitor_line(line: str, t0=0) -> MonitorSample:
    sections = [s.strip() for s in line.split("|")]
    if len(sections) != 3:
        raise ValueError("expected 3 '|'-separated sections")
    head = sections[0].split()
    if len(head) < 2 or head[1] != "CPU":
        raise ValueError("expected '<epoch> CPU ...'")
    mem = sections[1].split()
    net = sections[2].split()
    if len(mem) != 2 or mem[0] != "MEM" or len(net) != 3 or net[0] != "NET":
        raise ValueError("expected 'MEM <bytes>' and 'NET <in> <out>'")
    return MonitorSample(
        t=parse_fraction(head[0]) - Fraction(t0),
        cpu_per_core=tuple(parse_fraction(c) for c in head[2:]),
        memory=int(mem[1]),
        bytes_in=int(net[1]),
        bytes_out=int(net[2]),
    )


def parse_monitor_log(path, t0=0) -> list[MonitorSample]:
    path = Path(path)
    samples = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            sample = parse_monitor_line(line, t0)
        except ValidationError as exc:
            raise ValidationError(exc.reason, str(path), lineno) from None
        except ValueError as exc:
            raise ParseError(str(exc), str(path), lineno) from None
        if samples and sample.t < samples[-1].t:
            raise ValidationError("monitor timestamps go backwards", str(path), lineno)
        samples.append(sample)
    return samples


def format_monitor_line(epoch, cpu: Sequence, memory: int, bytes_in: int, bytes_out: int) -> str:
    cpus = " ".join(format_decimal(Fraction(c), 6) for c in cpu)
    return f"{format_decimal(Fraction(epoch), 6)} CPU {cpus} | MEM {memory} | NET {bytes_in} {bytes_out}"


@dataclass(frozen=True)
class BandwidthSeries:
    """Gbit/s values on a regular grid starting at ``start``; ``None`` is a gap."""

    interval: Fraction
    values: tuple[Fraction | None, ...]
    source_role: str
    start: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "interval", Fraction(self.interval))
        object.__setattr__(self, "start", Fraction(self.start))
        object.__setattr__(self, "values", tuple(
            None if v is None else Fraction(v) for v in self.values))
        if self.interval <= 0:
            raise ValidationError("interval must be positive")
        if self.source_role not in ROLES:
            raise ValidationError(f"unknown role {self.source_role!r}")
        if any(v is not None and v < 0 for v in self.values):
            raise ValidationError("negative bandwidth value")

    @property
    def end(self) -> Fraction:
        return self.start + self.interval * len(self.values)


def _bucket_values(points: Sequence[tuple[Fraction, Fraction]], interval: Fraction,
                   start: Fraction) -> list[Fraction | None]:
    # Values falling into the same slot are averaged.
    slots: dict[int, list[Fraction]] = {}
    for t, v in points:
        slots.setdefault(math.floor((t - start) / interval), []).append(v)
    if not slots:
        return []
    n = max(slots) + 1
    return [sum(slots[i]) / len(slots[i]) if i in slots else None for i in range(n)]


def normalize_bandwidth(path, unit: str, interval=1, role: str = "sender", t0=0) -> BandwidthSeries:
    """Read ``<t> <value>`` lines and express every value in Gbit/s."""
    if unit not in UNIT_TO_GBPS:
        raise ValidationError(f"unknown unit {unit!r}; expected one of {', '.join(UNIT_TO_GBPS)}")
    factor = UNIT_TO_GBPS[unit]
    interval = Fraction(interval)
    path = Path(path)
    points = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"expected '<t> <value>', got {line!r}", str(path), lineno)
        try:
            t, value = parse_fraction(parts[0]) - Fraction(t0), parse_fraction(parts[1])
        except ValueError as exc:
            raise ParseError(str(exc), str(path), lineno) from None
        if points and t < points[-1][0]:
            raise ValidationError("non-monotonic timestamps", str(path), lineno)
        if value < 0:
            raise ValidationError("negative bandwidth value", str(path), lineno)
        points.append((t, value * factor))
    start = points[0][0] if points else Fraction(0)
    return BandwidthSeries(interval, tuple(_bucket_values(points, interval, start)), role, start)


def bandwidth_from_monitor(samples: Sequence[MonitorSample], role: str, direction: str = "in",
                           interval=1) -> BandwidthSeries:
    """Turn per-sample NET byte counts into a Gbit/s series.

    Each sample's counters cover the ``interval`` seconds ending at its
    timestamp.
    """
    interval = Fraction(interval)
    points = []
    for s in samples:
        count = s.bytes_in if direction == "in" else s.bytes_out
        points.append((s.t - interval, Fraction(8 * count, 10**9) / interval))
    start = points[0][0] if points else Fraction(0)
    return BandwidthSeries(interval, tuple(_bucket_values(points, interval, start)), role, start)


@dataclass(frozen=True)
class MergedTable:
    interval: Fraction
    times: tuple[Fraction, ...]
    columns: dict[str, tuple[Fraction | None, ...]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"{r}_gbps" for r in ROLES])
        for i, t in enumerate(self.times):
            w.writerow([format_decimal(t, 6)] + [
                format_decimal(self.columns[r][i], 12) if r in self.columns else ""
                for r in ROLES])
        return buf.getvalue()


def align_and_merge(series: Iterable[BandwidthSeries], window: tuple) -> MergedTable:
    """Resample every series onto ``window = (start, end)`` with one column per role."""
    series = list(series)
    start, end = Fraction(window[0]), Fraction(window[1])
    if end <= start:
        raise ValidationError(f"empty window {window}")
    if not series:
        raise ValidationError("no series to merge")
    interval = series[0].interval
    roles = set()
    for s in series:
        if s.interval != interval:
            raise ValidationError(
                f"interval mismatch: {s.source_role} has {s.interval}, expected {interval}")
        if s.source_role in roles:
            raise ValidationError(f"duplicate series for role {s.source_role!r}")
        roles.add(s.source_role)
        if s.end <= start or s.start >= end:
            raise ValidationError(
                f"{s.source_role} series [{s.start}, {s.end}) lies entirely outside the "
                f"window [{start}, {end})")
    n = math.ceil((end - start) / interval)
    times = tuple(start + i * interval for i in range(n))
    columns = {}
    for s in series:
        col = []
        for t in times:
            # Slot covering t, when the series' grid is offset from the window's.
            k = math.floor((t - s.start) / interval)
            col.append(s.values[k] if 0 <= k < len(s.values) else None)
        columns[s.source_role] = tuple(col)
    return MergedTable(interval, times, {r: columns[r] for r in ROLES if r in columns})


@dataclass(frozen=True)
class ResourceSummary:
    cpu_per_core: tuple[Fraction, ...]
    cpu_overall: Fraction
    memory_avg: Fraction
    samples: int


def summarize_resources(samples: Sequence[MonitorSample], window: tuple | None = None
                        ) -> ResourceSummary:
    """Arithmetic means over the samples inside ``window`` (half-open).

    Exact duplicate samples are counted once.
    """
    chosen = []
    seen = set()
    for s in samples:
        if window is not None and not (Fraction(window[0]) <= s.t < Fraction(window[1])):
            continue
        if s in seen:
            continue
        seen.add(s)
        chosen.append(s)
    if not chosen:
        raise ValidationError("no monitor samples in the evaluation window")
    cores = max(len(s.cpu_per_core) for s in chosen)
    per_core = []
    for i in range(cores):
        vals = [s.cpu_per_core[i] for s in chosen if i < len(s.cpu_per_core)]
        per_core.append(sum(vals) / len(vals))
    all_vals = [c for s in chosen for c in s.cpu_per_core]
    overall = sum(all_vals) / len(all_vals) if all_vals else Fraction(0)
    memory = Fraction(sum(s.memory for s in chosen), len(chosen))
    return ResourceSummary(tuple(per_core), overall, memory, len(chosen))
