import json
from datetime import datetime, timezone
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idsbench.adapters import (
    AlertRecord, AttackOffer, IdsStatsRecord, MockIds, MockIdsConfig, MockIdsEngine,
    OfferedInterval, StatsSemantics, load_ids_stats, mock_ids_run, packet_totals,
    parse_snort_fast, parse_snort_stats, parse_suricata_eve, to_runtime_averages,
)
from idsbench.adapters.control import ControlChannel, ExternalIds
from idsbench.adapters.eve import format_eve_alert, format_eve_stats
from idsbench.adapters.fastlog import parse_fast_line
from idsbench.adapters.mock import SNORT_LIKE, unit_hash
from idsbench.adapters.records import epoch_of
from idsbench.defaults import default_priorities
from idsbench.errors import ParseError, ValidationError
from idsbench.plan import AttackType, MessageMapping

T0 = epoch_of(datetime(2019, 8, 28, 12, 0, 0, tzinfo=timezone.utc))
LINE = ("08/28-12:13:14.123456  [**] [1:100:1] ET SCAN Potential SSH Scan [**] "
        "[Priority: 2] {TCP} 10.9.0.5:4444 -> 10.0.1.2:22")


def test_fast_line_example():
    a = parse_fast_line(LINE, T0)
    assert a.message == "ET SCAN Potential SSH Scan"
    assert (a.src_addr, a.src_port, a.dst_addr, a.dst_port) == ("10.9.0.5", 4444, "10.0.1.2", 22)
    assert a.protocol == "TCP"
    assert a.t == 13 * 60 + 14 + Fraction(123456, 10**6)


@pytest.mark.parametrize("line", [
    "08/28/2019-12:13:14.123456  [**] [1:100:1] X [**] [Priority: 2] {UDP} 10.9.0.5:1 -> 10.0.1.2:2",
    "19/08/28-12:13:14.123456 [**] [1:100:1] X [**] [Classification: Misc] [Priority: 2] "
    "{ICMP} 10.9.0.5 -> 10.0.1.2",
])
def test_fast_line_date_variants(line):
    a = parse_fast_line(line, T0)
    assert a.t == 13 * 60 + 14 + Fraction(123456, 10**6)
    assert a.message == "X"


def test_fast_empty_file(tmp_path):
    p = tmp_path / "alerts.log"
    p.write_text("")
    assert parse_snort_fast(p, T0) == []


def test_fast_malformed_lines_reported(tmp_path):
    lines = []
    for i in range(100):
        if i in (10, 50, 90):
            lines.append(f"garbage line {i}")
        else:
            lines.append(LINE.replace("10.9.0.5", f"10.9.0.{i % 200 + 1}"))
    p = tmp_path / "alerts.log"
    p.write_text("\n".join(lines) + "\n")
    rejects = []
    alerts = parse_snort_fast(p, T0, rejects)
    assert len(alerts) == 97
    assert [r[0] for r in rejects] == [11, 51, 91]


def test_fast_too_many_malformed(tmp_path):
    p = tmp_path / "alerts.log"
    p.write_text(LINE + "\n" + "bad\n" * 2)
    with pytest.raises(ParseError):
        parse_snort_fast(p, T0)


def test_fast_unreadable(tmp_path):
    with pytest.raises(ParseError):
        parse_snort_fast(tmp_path / "missing.log", T0)


def test_alert_before_t0_is_rejected_not_malformed(tmp_path):
    p = tmp_path / "alerts.log"
    p.write_text(LINE.replace("12:13:14", "11:59:59") + "\n" + LINE + "\n")
    rejects = []
    assert len(parse_snort_fast(p, T0, rejects)) == 1
    assert len(rejects) == 1


def test_eve_alerts_and_stats(tmp_path):
    alert = AlertRecord(5, "ET SCAN Potential SSH Scan", "10.9.0.5", "10.0.1.2", "TCP", 4444, 22,
                        "1:2001219:20")
    lines = [format_eve_alert(alert, T0),
             format_eve_stats(T0 + 10, 1000, 0),
             format_eve_stats(T0 + 20, 3000, 500),
             json.dumps({"timestamp": "2019-08-28T12:00:30.000000+0000", "event_type": "flow"})]
    p = tmp_path / "eve.json"
    p.write_text("\n".join(lines) + "\n")
    alerts, stats = parse_suricata_eve(p, T0)
    assert alerts == [alert]
    assert [(s.t, s.received, s.dropped) for s in stats] == [(10, 1000, 0), (20, 3000, 500)]
    assert all(s.semantics is StatsSemantics.CUMULATIVE_TOTAL for s in stats)


def test_eve_only_stats(tmp_path):
    p = tmp_path / "eve.json"
    p.write_text(format_eve_stats(T0 + 1, 5, 1) + "\n")
    alerts, stats = parse_suricata_eve(p, T0)
    assert alerts == [] and len(stats) == 1
    assert load_ids_stats(p, T0) == stats


def test_eve_top_level_capture_and_z_timestamp(tmp_path):
    p = tmp_path / "eve.json"
    p.write_text(json.dumps({"timestamp": "2019-08-28T12:00:02Z", "event_type": "stats",
                             "capture": {"kernel_packets": 7}}) + "\n")
    _, stats = parse_suricata_eve(p, T0)
    assert (stats[0].t, stats[0].received, stats[0].dropped) == (2, 7, 0)


def test_runtime_averages():
    cum = [IdsStatsRecord(0, 0, 0, "cumulative_total"),
           IdsStatsRecord(10, 1000, 0, "cumulative_total")]
    out = to_runtime_averages(cum)
    assert len(out) == 1 and out[0].received == 100
    assert out[0].semantics is StatsSemantics.RUNTIME_AVERAGE_RATE
    assert to_runtime_averages(out) == out


def test_runtime_averages_errors():
    with pytest.raises(ValidationError):
        to_runtime_averages([IdsStatsRecord(1, 10, 0, "cumulative_total"),
                             IdsStatsRecord(2, 5, 0, "cumulative_total")])
    with pytest.raises(ValidationError):
        to_runtime_averages([IdsStatsRecord(1, 10, 0, "cumulative_total"),
                             IdsStatsRecord(2, 5, 0, "runtime_average_rate")])


@settings(max_examples=100)
@given(st.lists(st.tuples(st.integers(1, 1000), st.integers(0, 10**6), st.integers(0, 10**5)),
                min_size=1, max_size=10), st.sampled_from([1000, 60, 1]))
def test_runtime_averages_scale_invariant(steps, factor):
    t = rec = drop = 0
    series = []
    for dt, r, d in steps:
        t, rec, drop = t + dt, rec + r, drop + d
        series.append(IdsStatsRecord(t, rec, drop, "cumulative_total"))
    scaled = [IdsStatsRecord(s.t * factor, s.received, s.dropped, s.semantics) for s in series]
    a, b = to_runtime_averages(series), to_runtime_averages(scaled)
    assert [x.received for x in a] == [y.received * factor for y in b]
    assert packet_totals(series).received == rec


def test_snort_stats_file(tmp_path):
    p = tmp_path / "stats.log"
    p.write_text("# t rec drop\n1000.5 10 1\n1001.5 12.5 0.5\n")
    recs = parse_snort_stats(p, t0=1000)
    assert [r.t for r in recs] == [Fraction(1, 2), Fraction(3, 2)]
    assert recs[1].received == Fraction(25, 2)
    assert load_ids_stats(p, 1000) == recs
    p.write_text("1 2\n")
    with pytest.raises(ParseError):
        parse_snort_stats(p)


# -- mock IDS ---------------------------------------------------------------


def _offer(kind, src, packets=200, minute=0, concurrent=1, due=1):
    return AttackOffer(kind.value, kind, src, "10.0.1.2", packets, packets * 100, Fraction(due),
                       minute, concurrent)


def _interval(i, gbps, attacks=(), epoch=T0):
    nbytes = int(gbps * 10**9 / 8)
    return OfferedInterval(i, Fraction(i), epoch + i, Fraction(1), nbytes // 1500, nbytes,
                           tuple(attacks))


def test_mock_capacity_cap():
    cfg = MockIdsConfig.from_profile(default_priorities())
    run = mock_ids_run(cfg, [_interval(0, 7)])
    r = run.intervals[0]
    assert r.received + r.dropped == r.offered_packets
    assert abs(Fraction(r.dropped, r.offered_packets) - Fraction(6, 7)) < Fraction(1, 10**4)
    assert r.analyzed_gbps == 1


def test_mock_no_drops_below_capacity():
    cfg = MockIdsConfig.from_profile(default_priorities(), SNORT_LIKE)
    run = mock_ids_run(cfg, [_interval(0, 5)])
    assert run.intervals[0].dropped == 0


def test_mock_lossless_emits_every_required_message_once():
    prof = default_priorities()
    cfg = MockIdsConfig.from_profile(prof, capacity_gbps=100)
    offers = [_offer(k, f"10.9.0.{i + 1}") for i, k in enumerate(AttackType)]
    run = mock_ids_run(cfg, [_interval(0, 1, offers)])
    got = sorted((a.src_addr, a.message) for a in run.alerts)
    want = sorted((f"10.9.0.{i + 1}", e.message_pattern)
                  for i, k in enumerate(AttackType) for e in prof.required(k))
    assert got == want


def test_mock_flood_below_threshold_is_silent():
    cfg = MockIdsConfig.from_profile(default_priorities(), capacity_gbps=100)
    run = mock_ids_run(cfg, [_interval(0, 1, [_offer(AttackType.UDP_FLOOD, "10.9.0.1", 20)])])
    assert run.alerts == []


def test_mock_degradation_suppresses_by_hash():
    cfg = MockIdsConfig.from_profile(default_priorities(), capacity_gbps=100,
                                     detection_degradation=Fraction(1, 10), degradation_knee=0)
    assert cfg.suppression(5) == Fraction(1, 2)
    assert cfg.suppression(20) == 1
    offers = [_offer(AttackType.SYN_SCAN, f"10.9.1.{i}", concurrent=5) for i in range(1, 201)]
    run = mock_ids_run(cfg, [_interval(0, 1, offers)])
    kept = {a.src_addr for a in run.alerts}
    oracle = {o.source_address for o in offers
              if unit_hash("suppress", o.trace_id, o.source_address, "TCPScan") >= Fraction(1, 2)}
    assert kept == oracle
    assert 60 < len(kept) < 140


def test_mock_is_deterministic():
    cfg = MockIdsConfig.from_profile(default_priorities())
    offers = [_offer(k, f"10.9.0.{i + 1}") for i, k in enumerate(AttackType)]
    a = mock_ids_run(cfg, [_interval(0, 3, offers)])
    b = mock_ids_run(cfg, [_interval(0, 3, offers)])
    assert a.alert_lines == b.alert_lines and a.stats_lines == b.stats_lines


def test_mock_fast_lines_parse_back(tmp_path):
    cfg = MockIdsConfig.from_profile(default_priorities(), capacity_gbps=100)
    offers = [_offer(k, f"10.9.0.{i + 1}", due=Fraction(i, 3)) for i, k in enumerate(AttackType)]
    run = mock_ids_run(cfg, [_interval(0, 1, offers)])
    p = tmp_path / "alerts.log"
    p.write_text("\n".join(run.alert_lines) + "\n")
    assert parse_snort_fast(p, T0) == run.alerts


def test_mock_stats_styles_and_oracle(tmp_path):
    for style in ("suricata_like", "snort_like"):
        cfg = MockIdsConfig.from_profile(default_priorities(), style, capacity_gbps=1)
        run = mock_ids_run(cfg, [_interval(i, 2 + i % 3) for i in range(60)])
        p = tmp_path / f"{style}.log"
        p.write_text("\n".join(run.stats_lines) + "\n")
        stats = load_ids_stats(p, T0)
        avgs = to_runtime_averages(stats)
        rec = drop = 0
        for i, (avg, r) in enumerate(zip(avgs, run.intervals)):
            rec += r.received
            drop += r.dropped
            if style == "suricata_like":
                assert avg.received == Fraction(rec, i + 1)
                assert avg.dropped == Fraction(drop, i + 1)
            else:
                assert abs(avg.received - Fraction(rec, i + 1)) <= Fraction(1, 10**6)


def test_mock_memory_and_cpu():
    cfg = MockIdsConfig.from_profile(default_priorities(), SNORT_LIKE, base_cpu=Fraction(1, 2))
    engine = MockIdsEngine(cfg)
    r = engine.process(_interval(0, 5))
    assert "MEM 6000000" in engine.run.monitor_lines[0]
    assert r.cpu == (Fraction(1, 4),) * 4


def test_mock_aliases_pick_members():
    aliases = MessageMapping({"TCPScan": {"TCPScan", "TCPFilteredScan"}})
    cfg = MockIdsConfig.from_profile(default_priorities(), capacity_gbps=100, aliases=aliases)
    offers = [_offer(AttackType.SYN_SCAN, f"10.9.2.{i}") for i in range(1, 40)]
    run = mock_ids_run(cfg, [_interval(0, 1, offers)])
    assert {a.message for a in run.alerts} == {"TCPScan", "TCPFilteredScan"}


def test_mock_config_validation():
    with pytest.raises(ValidationError):
        MockIdsConfig(capacity_gbps=0)
    with pytest.raises(ValidationError):
        MockIdsConfig(detection_degradation=1)
    with pytest.raises(ValidationError):
        MockIdsConfig(stats_style="bro")


# -- control channel --------------------------------------------------------


def test_control_channel_expect():
    ch = ControlChannel()
    ch.emit("noise")
    ch.emit("READY")
    assert ch.expect("READY", 1)
    assert not ch.expect("READY", 0.05)


def test_mock_adapter_lifecycle(tmp_path):
    ids = MockIds(MockIdsConfig.from_profile(default_priorities()), "suricata")
    ids.start(tmp_path, scale=0.01)
    assert ids.wait_ready(2)
    ids.start_monitor(T0)
    ids.offer(_interval(0, 1, [_offer(AttackType.SYN_SCAN, "10.9.0.1")]))
    assert ids.stop(2)
    ids.kill()
    assert ids.observed_sources == {"10.9.0.1"}
    assert (tmp_path / "alerts.log").read_text().count("TCPScan") == 1
    assert len((tmp_path / "monitor_ids.log").read_text().splitlines()) == 2


def test_mock_adapter_never_ready(tmp_path):
    ids = MockIds(MockIdsConfig(ready_delay=None))
    ids.start(tmp_path, scale=0.01)
    assert not ids.wait_ready(0.1)
    ids.kill()


def test_external_adapter_speaks_protocol(tmp_path):
    script = tmp_path / "fake_ids.py"
    script.write_text(
        "import os, sys\n"
        "d = os.environ['IDSBENCH_RUN_DIR']\n"
        "open(os.path.join(d, 'alerts.log'), 'w').close()\n"
        "print('READY', flush=True)\n"
        "for line in sys.stdin:\n"
        "    if line.strip() == 'STOP':\n"
        "        print('STOPPED', flush=True)\n"
        "        break\n")
    ids = ExternalIds(f"python3 {script} {{artifacts}}")
    ids.start(tmp_path)
    assert ids.wait_ready(10)
    assert ids.stop(10)
    ids.kill()
    assert (tmp_path / "alerts.log").exists()
