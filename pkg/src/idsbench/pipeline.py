"""Offline processing of an artifacts directory into match tables and metrics.

Everything here reads files only, so an archived run can be re-processed
at any time with identical output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from ._num import format_exact, parse_fraction
from .adapters.eve import parse_suricata_eve
from .adapters.fastlog import parse_snort_fast
from .adapters.stats import load_ids_stats, packet_totals
from .errors import ValidationError
from .matcher import MatchTable, match
from .metrics import SampleKey, SampleMetrics, SentTotals, TestResult, grid_report, pool
from .monitor import (
    MergedTable, align_and_merge, bandwidth_from_monitor, parse_monitor_log, summarize_resources,
)
from .orchestrator import MINUTE, read_manifest, read_phase_log
from .plan import ExpectationProfile, MessageMapping, load_plan

RESULT_FILE = "test_result.json"


@dataclass
class ProcessedRun:
    result: TestResult
    table: MatchTable
    bandwidth: MergedTable | None
    rejects: list


def _is_json_log(path: Path) -> bool:
    with open(path, encoding="utf-8", errors="replace") as f:
        for line in f:
            if line.strip():
                return line.lstrip().startswith("{")
    return False


def _read_sent(path: Path, t0: Fraction, end: Fraction) -> SentTotals | None:
    if not path.exists():
        return None
    last = None
    for line in path.read_text(encoding="utf-8").splitlines():
        parts = line.split()
        if len(parts) != 2:
            continue
        t = parse_fraction(parts[0]) - t0
        if 0 < t <= end:
            last = (t, Fraction(int(parts[1])))
    if last is None:
        return None
    # The cumulative counter starts with the idle sample taken before evaluation.
    return SentTotals(last[0], last[1])


def process_run(artifacts_dir, profile: ExpectationProfile, mapping: MessageMapping
                ) -> ProcessedRun:
    """Parse, match and measure one finished test."""
    d = Path(artifacts_dir)
    if not d.is_dir():
        raise ValidationError(f"{d} is not a directory")
    manifest = read_manifest(d)
    if manifest.get("aborted"):
        raise ValidationError(f"run in {d} was aborted: {manifest.get('error')}")
    plan = load_plan(d / "plan.txt")
    phases, _ = read_phase_log(d / "phase.log")
    epochs = dict((name, epoch) for epoch, name in phases)
    if "Evaluation" not in epochs or "Output" not in epochs:
        raise ValidationError(f"{d}/phase.log lacks an evaluation window")
    t0 = epochs["Evaluation"]
    end = epochs["Output"] - t0
    interval = parse_fraction(manifest.get("interval", "1"))
    files = {(f["type"], f["role"]): d / f["name"] for f in manifest["files"]}

    rejects: list = []
    alerts_path = files.get(("alerts", "ids"))
    if alerts_path is None:
        raise ValidationError(f"no alert log listed in {d}/manifest")
    stats = []
    if _is_json_log(alerts_path):
        alerts, stats = parse_suricata_eve(alerts_path, t0, rejects)
    else:
        alerts = parse_snort_fast(alerts_path, t0, rejects)
    stats_path = files.get(("stats", "ids"))
    if stats_path is not None and stats_path.stat().st_size:
        stats = load_ids_stats(stats_path, t0)
    totals = packet_totals(stats) if stats else None

    table, counts = match(alerts, plan, profile, mapping)

    resources = None
    series = []
    directions = {"sender": "out", "receiver": "in", "ids": "in"}
    for role, direction in directions.items():
        path = files.get(("monitor", role))
        if path is None or not path.exists():
            continue
        samples = [s for s in parse_monitor_log(path, t0) if 0 < s.t <= end]
        if not samples:
            continue
        if role == "ids":
            resources = summarize_resources(samples)
        series.append(bandwidth_from_monitor(samples, role, direction, interval))
    duration = MINUTE * plan.params.duration_minutes
    bandwidth = align_and_merge(series, (0, duration)) if series else None

    sent = _read_sent(d / "sender_packets.log", t0, end)
    key = SampleKey(plan.params.target_bandwidth, plan.params.attacks_per_minute,
                    plan.params.ids_id)
    result = TestResult(key, counts, resources, totals, sent, table)
    return ProcessedRun(result, table, bandwidth, rejects)


# -- persisted results ------------------------------------------------------


def _encode(value):
    if isinstance(value, Fraction):
        return format_exact(value)
    if isinstance(value, tuple):
        return list(value)
    return value


def metrics_to_json(key: SampleKey, m: SampleMetrics) -> dict:
    return {
        "key": {"bandwidth": format_exact(key.bandwidth),
                "attacks_per_minute": key.attacks_per_minute, "ids_id": key.ids_id},
        "metrics": {f.name: _encode(getattr(m, f.name)) for f in fields(m)},
    }


_FRACTION_FIELDS = {"tpr", "far", "precision", "cpu_avg", "memory_avg", "received_pkts_avg",
                    "drop_rate_avg", "sent_pkts_avg", "ids_elapsed", "received_total",
                    "dropped_total", "sent_elapsed", "sent_total"}


def metrics_from_json(data: dict) -> tuple[SampleKey, SampleMetrics]:
    k = data["key"]
    key = SampleKey(parse_fraction(k["bandwidth"]), int(k["attacks_per_minute"]), k["ids_id"])
    values = {}
    for name, v in data["metrics"].items():
        if name in _FRACTION_FIELDS and v is not None:
            v = parse_fraction(v)
        elif name == "flags":
            v = tuple(v)
        values[name] = v
    return key, SampleMetrics(**values)


def write_processed(run: ProcessedRun, artifacts_dir) -> list[Path]:
    d = Path(artifacts_dir)
    out = {
        "match_table.csv": run.table.to_csv(),
        "unattributed.csv": run.table.unattributed_csv(),
        RESULT_FILE: json.dumps(metrics_to_json(run.result.key, run.result.metrics()),
                                indent=2, sort_keys=True) + "\n",
    }
    if run.bandwidth is not None:
        out["bandwidth.csv"] = run.bandwidth.to_csv()
    paths = []
    for name, text in out.items():
        (d / name).write_text(text, encoding="utf-8")
        paths.append(d / name)
    return paths


def find_results(roots: Sequence) -> list[Path]:
    found = []
    for root in roots:
        root = Path(root)
        if (root / RESULT_FILE).exists():
            found.append(root / RESULT_FILE)
        else:
            found.extend(sorted(root.glob(f"*/{RESULT_FILE}")))
    return found


def build_report(roots: Sequence, out_dir) -> dict[str, Path]:
    """Pool every processed test per sample key and write the report CSVs."""
    paths = find_results(roots)
    if not paths:
        raise ValidationError(f"no {RESULT_FILE} under {', '.join(map(str, roots))}")
    grouped: dict[SampleKey, list[SampleMetrics]] = {}
    for p in paths:
        key, m = metrics_from_json(json.loads(p.read_text(encoding="utf-8")))
        grouped.setdefault(key, []).append(m)
    samples = {k: pool(ms) for k, ms in grouped.items()}
    return grid_report(samples, out_dir)

