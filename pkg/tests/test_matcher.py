import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idsbench.adapters import AlertRecord
from idsbench.defaults import default_mapping, default_priorities
from idsbench.errors import ValidationError
from idsbench.matcher import (
    EARLY, LATE, DetectionCounts, attribute, count_matches, expand_expectations, match,
)
from idsbench.plan import (
    IDENTITY_MAPPING, AttackPlan, AttackType, ExpectationProfile, MessageMapping,
    PriorityEntry, ScheduledAttack, TestParameters, parse_priorities,
)

from oracles import match_oracle

DST = "10.0.1.2"


def _plan(rows, apm=None):
    """rows: {minute: [(type, src), ...]}"""
    apm = apm or max(len(v) for v in rows.values())
    sched = {m: tuple(ScheduledAttack(k, k.value, s) for k, s in v) for m, v in rows.items()}
    return AttackPlan(TestParameters(max(rows) + 1, apm, 1, "x"), sched)


def _alert(t, msg, src):
    return AlertRecord(Fraction(t), msg, src, DST, "TCP")


SSH_PROFILE = parse_priorities(
    "ssh_bruteforce_fail | 0 | ET SCAN Potential SSH Scan\n"
    "ssh_bruteforce_fail | 1 | ET INFO NetSSH SSH Version String Hardcoded in Metasploit\n"
    "syn_scan | 0 | TCPScan\n")


def test_expand_expectations():
    plan = _plan({0: [(AttackType.SSH_BRUTEFORCE_FAIL, "10.9.0.1")]})
    exps = expand_expectations(plan, SSH_PROFILE, IDENTITY_MAPPING)
    assert [(e.message, e.priority) for e in exps] == [
        ("ET SCAN Potential SSH Scan", 0),
        ("ET INFO NetSSH SSH Version String Hardcoded in Metasploit", 1)]
    many = _plan({0: [(AttackType.SYN_SCAN, f"10.9.0.{i}") for i in range(1, 11)]})
    assert len(expand_expectations(many, SSH_PROFILE, IDENTITY_MAPPING)) == 10


def test_expand_missing_type_errors():
    plan = _plan({0: [(AttackType.UDP_SCAN, "10.9.0.1")]})
    with pytest.raises(ValidationError, match="udp_scan"):
        expand_expectations(plan, SSH_PROFILE, IDENTITY_MAPPING)


def test_attribute_examples():
    plan = _plan({0: [(AttackType.SYN_SCAN, "10.9.0.5")], 1: [(AttackType.SYN_SCAN, "10.9.0.6")]})
    mapping = default_mapping()
    table = attribute([_alert(30, "TCPFilteredScan", "10.9.0.5"),
                       _alert(70, "TCPScan", "10.9.0.5"),
                       _alert(10, "TCPScan", "10.9.0.6"),
                       _alert(10, "TCPScan", "10.1.1.1")], plan, mapping)
    row0 = table.rows[(0, "TCPScan")]
    assert row0.logged == 2 and LATE in row0.flags
    assert EARLY in table.rows[(1, "TCPScan")].flags
    assert [a.src_addr for a in table.unattributed] == ["10.1.1.1"]


def test_attribute_far_minute_is_unattributed():
    plan = _plan({0: [(AttackType.SYN_SCAN, "10.9.0.5")], 1: [(AttackType.SYN_SCAN, "10.9.0.6")],
                  2: [(AttackType.SYN_SCAN, "10.9.0.7")]})
    table = attribute([_alert(150, "TCPScan", "10.9.0.5")], plan, IDENTITY_MAPPING)
    assert len(table.unattributed) == 1


def test_count_examples():
    plan = _plan({0: [(AttackType.SSH_BRUTEFORCE_FAIL, "10.9.0.1")]})
    _, c = match([_alert(1, "ET SCAN Potential SSH Scan", "10.9.0.1")], plan, SSH_PROFILE,
                 IDENTITY_MAPPING)
    assert c == DetectionCounts(1, 0, 0)
    _, c = match([], plan, SSH_PROFILE, IDENTITY_MAPPING)
    assert c == DetectionCounts(0, 0, 1)
    _, c = match([_alert(1, "whatever", "10.200.0.1")], plan, SSH_PROFILE, IDENTITY_MAPPING)
    assert c == DetectionCounts(0, 1, 1)


def test_optional_absorbs_and_surplus_is_fp():
    plan = _plan({0: [(AttackType.SSH_BRUTEFORCE_FAIL, "10.9.0.1")]})
    opt = "ET INFO NetSSH SSH Version String Hardcoded in Metasploit"
    alerts = [_alert(1, "ET SCAN Potential SSH Scan", "10.9.0.1"), _alert(2, opt, "10.9.0.1"),
              _alert(3, opt, "10.9.0.1"), _alert(4, "ET SCAN Potential SSH Scan", "10.9.0.1")]
    table, c = match(alerts, plan, SSH_PROFILE, IDENTITY_MAPPING)
    assert c == DetectionCounts(1, 2, 0)
    assert table.rows[(0, opt)].priority_class == 1
    lines = table.to_csv().splitlines()
    assert lines[0] == "minute,message,logged,expected,priority,flags"


def test_wildcard_longest_prefix():
    prof = ExpectationProfile({AttackType.SYN_SCAN: (PriorityEntry("ET SCAN *", 0),
                                                     PriorityEntry("ET SCAN NMAP *", 0))})
    plan = _plan({0: [(AttackType.SYN_SCAN, "10.9.0.1")]})
    table, c = match([_alert(1, "ET SCAN NMAP -sS", "10.9.0.1"),
                      _alert(2, "ET SCAN other", "10.9.0.1")], plan, prof, IDENTITY_MAPPING)
    assert c == DetectionCounts(2, 0, 0)
    assert table.rows[(0, "ET SCAN NMAP *")].logged == 1


def test_unattributed_csv():
    plan = _plan({0: [(AttackType.SYN_SCAN, "10.9.0.1")]})
    table, _ = match([_alert(Fraction(3, 2), "X", "10.8.0.1")], plan, SSH_PROFILE,
                     IDENTITY_MAPPING)
    assert table.unattributed_csv().splitlines()[1] == "1.5,X,10.8.0.1,10.0.1.2"


# -- random instances -------------------------------------------------------

MESSAGES = ["A1", "A2", "B1", "B2", "C", "TCPScan", "TCPFilteredScan", "Z"]
CLASSES = {"TCPScan": {"TCPScan", "TCPFilteredScan"}, "A1": {"A1", "A2"}}


def random_instance(rng: random.Random, wildcards: bool = True):
    minutes = rng.randint(1, 5)
    apm = rng.randint(1, max(1, 6 // minutes))
    kinds = list(AttackType)
    entries = {}
    pool = MESSAGES + (["A*", "B*", "T*"] if wildcards else [])
    for k in kinds:
        n = rng.randint(1, 3)
        chosen = rng.sample(pool, n)
        prios = [0] + [rng.randint(0, 1) for _ in range(n - 1)]
        entries[k.value] = list(zip(chosen, prios))
    srcs = [f"10.9.0.{i}" for i in range(1, minutes * apm + 1)]
    rows, instances = {}, []
    it = iter(srcs)
    for m in range(minutes):
        for _ in range(apm):
            k = rng.choice(kinds)
            s = next(it)
            rows.setdefault(m, []).append((k, s))
            instances.append((m, k.value, s))
    alerts = []
    for _ in range(rng.randint(0, 30)):
        src = rng.choice(srcs + ["10.8.0.1"])
        t = Fraction(rng.randrange(0, (minutes + 1) * 60 * 1000), 1000)
        alerts.append((t, rng.choice(MESSAGES), src))
    return rows, instances, entries, alerts


def run_instance(rows, entries, alerts, mapping):
    plan = _plan(rows)
    prof = ExpectationProfile({AttackType(k): tuple(PriorityEntry(p, pr) for p, pr in v)
                               for k, v in entries.items()})
    recs = [_alert(t, m, s) for t, m, s in alerts]
    return plan, prof, recs, match(recs, plan, prof, mapping)


@pytest.mark.parametrize("seed", range(40))
def test_matches_oracle(seed):
    rng = random.Random(seed)
    rows, instances, entries, alerts = random_instance(rng)
    _, _, _, (table, counts) = run_instance(rows, entries, alerts, MessageMapping(CLASSES))
    assert (counts.tp, counts.fp, counts.fn) == match_oracle(alerts, instances, entries, CLASSES)
    assert table.logged_total + len(table.unattributed) == len(alerts)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**9))
def test_invariants(seed):
    rng = random.Random(seed)
    rows, instances, entries, alerts = random_instance(rng)
    mapping = MessageMapping(CLASSES)
    plan, prof, recs, (table, c) = run_instance(rows, entries, alerts, mapping)
    required = sum(1 for e in expand_expectations(plan, prof, mapping) if e.priority == 0)
    assert c.tp + c.fn == required
    # mapping soundness
    pre = [_alert(t, mapping.canonicalize(m), s) for t, m, s in alerts]
    canon_prof = ExpectationProfile({
        k: tuple(PriorityEntry(e.message_pattern if e.is_wildcard
                               else mapping.canonicalize(e.message_pattern), e.priority)
                 for e in v) for k, v in prof.entries.items()})
    _, c2 = match(pre, plan, canon_prof, IDENTITY_MAPPING)
    assert c2 == c
    # adding an alert never lowers tp + fp
    extra = _alert(rng.randrange(0, 60), rng.choice(MESSAGES), rng.choice(sorted(plan.source_addresses)))
    _, c3 = match(recs + [extra], plan, prof, mapping)
    assert c3.tp + c3.fp >= c.tp + c.fp


def test_count_matches_matches_match():
    rng = random.Random(7)
    rows, _, entries, alerts = random_instance(rng)
    mapping = MessageMapping(CLASSES)
    plan, prof, recs, (_, c) = run_instance(rows, entries, alerts, mapping)
    table = attribute(recs, plan, mapping)
    assert count_matches(table, expand_expectations(plan, prof, mapping)) == c


def test_default_profile_covers_every_type():
    prof = default_priorities()
    assert all(prof.required(k) for k in AttackType)
