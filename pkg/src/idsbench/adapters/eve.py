"""Suricata EVE JSON (one object per line): alerts and capture stats."""

from __future__ import annotations

import json
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

from ..errors import ParseError, ValidationError
from .fastlog import check_malformed
from .records import (
    AlertRecord, IdsStatsRecord, StatsSemantics, datetime_of, epoch_of, normalize_protocol,
)


def parse_eve_timestamp(value: str) -> Fraction:
    value = value.strip()
    if value.endswith("Z"):
        value = value[:-1] + "+0000"
    for fmt in ("%Y-%m-%dT%H:%M:%S.%f%z", "%Y-%m-%dT%H:%M:%S%z"):
        try:
            return epoch_of(datetime.strptime(value, fmt))
        except ValueError:
            continue
    raise ValueError(f"bad timestamp {value!r}")


def format_eve_timestamp(epoch, tz=timezone.utc) -> str:
    dt = datetime_of(epoch, tz)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.%f%z")


def _capture(event: dict) -> dict:
    stats = event.get("stats")
    if isinstance(stats, dict) and isinstance(stats.get("capture"), dict):
        return stats["capture"]
    if isinstance(event.get("capture"), dict):
        return event["capture"]
    raise ValueError("stats event without capture counters")


def parse_suricata_eve(path, t0, rejects: list | None = None
                       ) -> tuple[list[AlertRecord], list[IdsStatsRecord]]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8", errors="replace")
    except OSError as exc:
        raise ParseError(f"cannot read EVE log: {exc}", str(path)) from exc
    t0 = Fraction(t0)
    alerts: list[AlertRecord] = []
    stats: list[IdsStatsRecord] = []
    total = malformed = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        total += 1
        try:
            event = json.loads(line)
            if not isinstance(event, dict):
                raise ValueError("not a JSON object")
            kind = event.get("event_type")
            if kind not in ("alert", "stats"):
                continue
            t = parse_eve_timestamp(event["timestamp"]) - t0
            if kind == "alert":
                alerts.append(AlertRecord(
                    t=t,
                    message=event["alert"]["signature"],
                    src_addr=event["src_ip"],
                    dst_addr=event["dest_ip"],
                    protocol=normalize_protocol(str(event.get("proto", ""))),
                    src_port=event.get("src_port"),
                    dst_port=event.get("dest_port"),
                    sid="{}:{}:{}".format(event["alert"].get("gid", 1),
                                          event["alert"].get("signature_id", 0),
                                          event["alert"].get("rev", 0)),
                ))
            else:
                cap = _capture(event)
                stats.append(IdsStatsRecord(
                    t, int(cap["kernel_packets"]), int(cap.get("kernel_drops", 0)),
                    StatsSemantics.CUMULATIVE_TOTAL))
        except ValidationError as exc:
            if rejects is not None:
                rejects.append((lineno, exc.reason, line))
        except (ValueError, KeyError, TypeError) as exc:
            malformed += 1
            if rejects is not None:
                rejects.append((lineno, f"{type(exc).__name__}: {exc}", line))
    check_malformed(malformed, total, str(path))
    return alerts, stats


def format_eve_stats(epoch, received: int, dropped: int, uptime: int | None = None) -> str:
    event = {
        "timestamp": format_eve_timestamp(epoch),
        "event_type": "stats",
        "stats": {"capture": {"kernel_packets": int(received), "kernel_drops": int(dropped)}},
    }
    if uptime is not None:
        event["stats"]["uptime"] = uptime
    return json.dumps(event, sort_keys=True)


def format_eve_alert(alert: AlertRecord, t0) -> str:
    gid, sid, rev = (alert.sid or "1:1000000:1").split(":")
    event = {
        "timestamp": format_eve_timestamp(Fraction(t0) + alert.t),
        "event_type": "alert",
        "src_ip": alert.src_addr,
        "dest_ip": alert.dst_addr,
        "proto": alert.protocol,
        "alert": {"signature": alert.message, "gid": int(gid), "signature_id": int(sid),
                  "rev": int(rev)},
    }
    if alert.src_port is not None:
        event["src_port"] = alert.src_port
    if alert.dst_port is not None:
        event["dest_port"] = alert.dst_port
    return json.dumps(event, sort_keys=True)
