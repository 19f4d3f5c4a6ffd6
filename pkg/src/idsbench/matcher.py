"""Attribute alerts to planned attack instances and count TP/FP/FN.

Alerts are attributed by source address (every attack instance has its own)
and bucketed into logical minutes. Rows of the match table are keyed by
``(minute, message)``; priority-0 expectations are required, priority-1
expectations absorb alerts that may or may not appear.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ._num import format_exact
from .adapters.records import AlertRecord
from .errors import ValidationError
from .plan import AttackPlan, AttackType, ExpectationProfile, MessageMapping

MINUTE = 60
LATE = "late"
EARLY = "early"


@dataclass(frozen=True)
class Expectation:
    minute: int
    trace_id: str
    attack_type: AttackType
    source_address: str
    message: str
    priority: int
    expected_count: int = 1

    def __post_init__(self):
        if self.priority not in (0, 1):
            raise ValidationError(f"priority must be 0 or 1, got {self.priority}")
        if self.expected_count < 1:
            raise ValidationError("expected_count must be positive")

    @property
    def is_wildcard(self) -> bool:
        return self.message.endswith("*")

    def matches(self, message: str) -> bool:
        if self.is_wildcard:
            return message.startswith(self.message[:-1])
        return message == self.message


@dataclass
class MatchRow:
    minute: int
    message: str
    logged: int = 0
    expected_required: int = 0
    expected_optional: int = 0
    flags: set[str] = field(default_factory=set)

    @property
    def expected(self) -> int:
        return self.expected_required + self.expected_optional

    @property
    def priority_class(self) -> int | None:
        if self.expected_required:
            return 0
        if self.expected_optional:
            return 1
        return None


@dataclass
class MatchTable:
    rows: dict[tuple[int, str], MatchRow] = field(default_factory=dict)
    unattributed: list[AlertRecord] = field(default_factory=list)

    def row(self, minute: int, message: str) -> MatchRow:
        key = (minute, message)
        if key not in self.rows:
            self.rows[key] = MatchRow(minute, message)
        return self.rows[key]

    @property
    def logged_total(self) -> int:
        return sum(r.logged for r in self.rows.values())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["minute", "message", "logged", "expected", "priority", "flags"])
        for key in sorted(self.rows):
            r = self.rows[key]
            prio = "" if r.priority_class is None else r.priority_class
            w.writerow([r.minute, r.message, r.logged, r.expected, prio,
                        ";".join(sorted(r.flags))])
        return buf.getvalue()

    def unattributed_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "message", "src", "dst"])
        for a in self.unattributed:
            w.writerow([format_exact(a.t), a.message, a.src_addr, a.dst_addr])
        return buf.getvalue()


@dataclass(frozen=True)
class DetectionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValidationError(f"negative detection count {self}")

    def __add__(self, other: "DetectionCounts") -> "DetectionCounts":
        return DetectionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


def expand_expectations(plan: AttackPlan, profile: ExpectationProfile,
                        mapping: MessageMapping) -> list[Expectation]:
    out = []
    for minute, attack in plan.instances():
        entries = profile.for_type(attack.attack_type)
        if not entries:
            raise ValidationError(
                f"attack type {attack.attack_type.value} has no entries in the priority profile")
        for entry in entries:
            message = entry.message_pattern
            if not entry.is_wildcard:
                message = mapping.canonicalize(message)
            out.append(Expectation(minute, attack.trace_id, attack.attack_type,
                                   attack.source_address, message, entry.priority))
    return out


def attribute(alerts: Iterable[AlertRecord], plan: AttackPlan,
              mapping: MessageMapping) -> MatchTable:
    """Bucket alerts into (minute, canonical message) rows by source address.

    An alert whose source belongs to an instance one minute earlier or later
    is attributed to that instance's minute and the row is flagged.
    """
    where = {a.source_address: minute for minute, a in plan.instances()}
    table = MatchTable()
    for alert in alerts:
        minute = math.floor(alert.t / MINUTE)
        planned = where.get(alert.src_addr)
        if planned is None or abs(planned - minute) > 1:
            table.unattributed.append(alert)
            continue
        row = table.row(planned, mapping.canonicalize(alert.message))
        row.logged += 1
        if minute > planned:
            row.flags.add(LATE)
        elif minute < planned:
            row.flags.add(EARLY)
    return table


def _resolve_key(message: str, exact: set[str], wildcards: Sequence[str]) -> str | None:
    if message in exact:
        return message
    # wildcards are pre-sorted longest prefix first
    for pattern in wildcards:
        if message.startswith(pattern[:-1]):
            return pattern
    return None


def fill_expectations(table: MatchTable, expectations: Iterable[Expectation]) -> MatchTable:
    """Merge expected counters into a skeleton table.

    A logged message lands on the exact expected message of its minute if
    there is one, otherwise on the longest matching wildcard pattern.
    """
    filled = MatchTable(unattributed=list(table.unattributed))
    per_minute: dict[int, tuple[set[str], list[str]]] = {}
    for e in expectations:
        row = filled.row(e.minute, e.message)
        if e.priority == 0:
            row.expected_required += e.expected_count
        else:
            row.expected_optional += e.expected_count
        exact, wild = per_minute.setdefault(e.minute, (set(), []))
        if e.is_wildcard:
            if e.message not in wild:
                wild.append(e.message)
        else:
            exact.add(e.message)
    for _, wild in per_minute.values():
        wild.sort(key=lambda p: (-len(p), p))
    for (minute, message), src in sorted(table.rows.items()):
        exact, wild = per_minute.get(minute, (set(), []))
        key = _resolve_key(message, exact, wild) or message
        row = filled.row(minute, key)
        row.logged += src.logged
        row.flags |= src.flags
    return filled


def count_rows(table: MatchTable) -> DetectionCounts:
    tp = fp = fn = 0
    for r in table.rows.values():
        hit = min(r.logged, r.expected_required)
        tp += hit
        fn += r.expected_required - hit
        surplus = r.logged - hit
        fp += surplus - min(surplus, r.expected_optional)
    return DetectionCounts(tp, fp + len(table.unattributed), fn)


def count_matches(table: MatchTable, expectations: Iterable[Expectation]) -> DetectionCounts:
    """TP/FP/FN for one test.

    Required rows score ``min(logged, expected)`` as TP and the shortfall as
    FN. Optional rows neither add FN when missing nor FP when present up to
    their expected count, and do not add TP either. Surplus alerts and
    unattributed alerts are FP.
    """
    return count_rows(fill_expectations(table, expectations))


def match(alerts: Sequence[AlertRecord], plan: AttackPlan, profile: ExpectationProfile,
          mapping: MessageMapping) -> tuple[MatchTable, DetectionCounts]:
    expectations = expand_expectations(plan, profile, mapping)
    table = fill_expectations(attribute(alerts, plan, mapping), expectations)
    return table, count_rows(table)
