from __future__ import annotations

import calendar
import enum
from dataclasses import dataclass
from datetime import datetime, timezone
from fractions import Fraction

from ..errors import ValidationError

MICRO = 1_000_000


class StatsSemantics(str, enum.Enum):
    CUMULATIVE_TOTAL = "cumulative_total"
    RUNTIME_AVERAGE_RATE = "runtime_average_rate"


@dataclass(frozen=True)
class AlertRecord:
    """One IDS alert, independent of the log format it came from.

    ``t`` is seconds since test start (exact, microsecond resolution).
    """

    t: Fraction
    message: str
    src_addr: str
    dst_addr: str
    protocol: str
    src_port: int | None = None
    dst_port: int | None = None
    sid: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "t", Fraction(self.t))
        if self.t < 0:
            raise ValidationError(f"alert time {self.t} before test start")
        if not self.message:
            raise ValidationError("empty alert message")


@dataclass(frozen=True)
class IdsStatsRecord:
    t: Fraction
    received: Fraction
    dropped: Fraction
    semantics: StatsSemantics

    def __post_init__(self):
        object.__setattr__(self, "t", Fraction(self.t))
        object.__setattr__(self, "received", Fraction(self.received))
        object.__setattr__(self, "dropped", Fraction(self.dropped))
        object.__setattr__(self, "semantics", StatsSemantics(self.semantics))
        if self.received < 0 or self.dropped < 0:
            raise ValidationError(f"negative packet counts at t={self.t}")


def normalize_protocol(name: str) -> str:
    name = name.strip().upper()
    return name if name in ("TCP", "UDP", "ICMP") else "OTHER"


def epoch_of(dt: datetime) -> Fraction:
    """Exact POSIX time of an aware datetime."""
    whole = calendar.timegm(dt.astimezone(timezone.utc).replace(microsecond=0).timetuple())
    return whole + Fraction(dt.microsecond, MICRO)


def datetime_of(epoch: Fraction, tz=timezone.utc) -> datetime:
    epoch = Fraction(epoch)
    us = round(epoch * MICRO)
    return datetime.fromtimestamp(us // MICRO, tz).replace(microsecond=us % MICRO)


def quantize_us(value) -> Fraction:
    return Fraction(round(Fraction(value) * MICRO), MICRO)
