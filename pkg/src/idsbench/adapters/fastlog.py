"""Snort/Suricata fast-alert log lines.

    08/28-12:13:14.123456  [**] [1:100:1] ET SCAN Potential SSH Scan [**] \
        [Priority: 2] {TCP} 10.9.0.5:4444 -> 10.0.1.2:22

Timestamps carry no zone; ``tz`` (UTC by default) says how the IDS wrote them.
Year-less ``MM/DD`` stamps take the year that puts them closest to ``t0``.
"""

from __future__ import annotations

import ipaddress
import logging
import re
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

from ..errors import ParseError, ValidationError
from .records import AlertRecord, datetime_of, epoch_of, normalize_protocol

log = logging.getLogger(__name__)

MAX_MALFORMED_FRACTION = Fraction(1, 10)

_FAST_RE = re.compile(
    r"^(?P<date>\d{2}/\d{2}(?:/\d{2,4})?)-(?P<H>\d{2}):(?P<M>\d{2}):(?P<S>\d{2})\.(?P<us>\d{1,6})"
    r"\s+\[\*\*\]\s+\[(?P<sid>\d+:\d+:\d+)\]\s+(?P<msg>.+?)\s+\[\*\*\]"
    r"(?:\s+\[Classification:[^\]]*\])?"
    r"\s+\[Priority:\s*(?P<prio>\d+)\]"
    r"\s+\{(?P<proto>[^}]+)\}"
    r"\s+(?P<src>\d{1,3}(?:\.\d{1,3}){3})(?::(?P<sport>\d+))?"
    r"\s+->\s+(?P<dst>\d{1,3}(?:\.\d{1,3}){3})(?::(?P<dport>\d+))?\s*$"
)


def _resolve_date(date: str, t0: Fraction, tz) -> tuple[int, int, int] | list[tuple[int, int, int]]:
    parts = [int(p) for p in date.split("/")]
    if len(parts) == 2:
        month, day = parts
        year = datetime_of(t0, tz).year
        return [(y, month, day) for y in (year - 1, year, year + 1)]
    a, b, c = parts
    if len(date.split("/")[2]) == 4:      # Suricata: MM/DD/YYYY
        return (c, a, b)
    return (2000 + a, b, c)               # Snort -y: YY/MM/DD


def _alert_epoch(m: re.Match, t0: Fraction, tz) -> Fraction:
    candidates = _resolve_date(m["date"], t0, tz)
    if isinstance(candidates, tuple):
        candidates = [candidates]
    us = int(m["us"].ljust(6, "0"))
    best = None
    for y, mo, d in candidates:
        try:
            dt = datetime(y, mo, d, int(m["H"]), int(m["M"]), int(m["S"]), us, tzinfo=tz)
        except ValueError:
            continue
        epoch = epoch_of(dt)
        if best is None or abs(epoch - t0) < abs(best - t0):
            best = epoch
    if best is None:
        raise ValueError(f"invalid date {m['date']}")
    return best


def parse_fast_line(line: str, t0, tz=timezone.utc) -> AlertRecord:
    """Parse one line; raises ValueError if it does not follow the grammar."""
    m = _FAST_RE.match(line.strip())
    if not m:
        raise ValueError("does not match the fast-alert grammar")
    for addr in (m["src"], m["dst"]):
        ipaddress.IPv4Address(addr)
    t = _alert_epoch(m, Fraction(t0), tz) - Fraction(t0)
    return AlertRecord(
        t=t,
        message=m["msg"],
        src_addr=m["src"],
        dst_addr=m["dst"],
        protocol=normalize_protocol(m["proto"]),
        src_port=int(m["sport"]) if m["sport"] else None,
        dst_port=int(m["dport"]) if m["dport"] else None,
        sid=m["sid"],
    )


def check_malformed(malformed: int, total: int, source: str) -> None:
    if total and Fraction(malformed, total) > MAX_MALFORMED_FRACTION:
        raise ParseError(
            f"{malformed} of {total} lines malformed; wrong log format?", source)


def parse_snort_fast(path, t0, rejects: list | None = None, tz=timezone.utc) -> list[AlertRecord]:
    """Parse a fast-alert log, re-basing timestamps against ``t0`` (epoch seconds).

    Lines that do not parse are appended to ``rejects`` as
    ``(lineno, reason, line)``; alerts stamped before ``t0`` are rejected the
    same way but do not count as malformed.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8", errors="replace")
    except OSError as exc:
        raise ParseError(f"cannot read alert log: {exc}", str(path)) from exc
    alerts = []
    total = malformed = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        total += 1
        try:
            alerts.append(parse_fast_line(line, t0, tz))
        except ValidationError as exc:
            if rejects is not None:
                rejects.append((lineno, exc.reason, line))
        except ValueError as exc:
            malformed += 1
            if rejects is not None:
                rejects.append((lineno, str(exc), line))
    check_malformed(malformed, total, str(path))
    if malformed:
        log.warning("%s: %d malformed alert lines", path, malformed)
    return alerts


def format_fast_line(alert: AlertRecord, t0, tz=timezone.utc, priority: int = 2) -> str:
    dt = datetime_of(Fraction(t0) + alert.t, tz)
    src = alert.src_addr if alert.src_port is None else f"{alert.src_addr}:{alert.src_port}"
    dst = alert.dst_addr if alert.dst_port is None else f"{alert.dst_addr}:{alert.dst_port}"
    sid = alert.sid or "1:1000000:1"
    return (f"{dt:%m/%d-%H:%M:%S}.{dt.microsecond:06d}  [**] [{sid}] {alert.message} [**] "
            f"[Priority: {priority}] {{{alert.protocol}}} {src} -> {dst}")
