"""Test parameters, attack plans, priority files and message mappings.

All three configuration files are line-oriented UTF-8 text; ``#`` starts a
comment and blank lines are ignored.

Plan file::

    M=30
    APM=10
    BW_GBPS=2
    IDS=suricata
    FLOOD_THRESHOLD=150
    0 syn_scan syn_scan 10.9.0.1
    ...

Priority file::

    ssh_bruteforce_fail | 0 | ET SCAN Potential SSH Scan
    ssh_bruteforce_fail | 1 | ET INFO NetSSH SSH Version String Hardcoded in Metasploit

Mapping file::

    TCPScan <= TCPFilteredScan, TCPScan
"""

from __future__ import annotations

import enum
import ipaddress
import logging
import random
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from ._num import format_exact, parse_fraction
from .errors import ParseError, ValidationError

log = logging.getLogger(__name__)

DEFAULT_FLOOD_THRESHOLD = 150
DEFAULT_ADDRESS_POOL = "10.9.0.0/16"


class AttackType(enum.Enum):
    """The nine attack kinds of the benchmark mix."""

    SSH_BRUTEFORCE_SUCCESS = "ssh_bruteforce_success"
    SSH_BRUTEFORCE_FAIL = "ssh_bruteforce_fail"
    TCP_CONNECT_FLOOD = "tcp_connect_flood"
    TCP_SYN_FLOOD = "tcp_syn_flood"
    UDP_FLOOD = "udp_flood"
    SYN_SCAN = "syn_scan"
    SYN_OS_SCAN = "syn_os_scan"
    UDP_SCAN = "udp_scan"
    USER_ENUMERATION = "user_enumeration"

    @classmethod
    def parse(cls, name: str) -> "AttackType":
        try:
            return cls(name.strip())
        except ValueError:
            raise ValueError(f"unknown attack type {name.strip()!r}") from None

    @property
    def is_flood(self) -> bool:
        return self in FLOOD_TYPES


FLOOD_TYPES = frozenset(
    {AttackType.TCP_CONNECT_FLOOD, AttackType.TCP_SYN_FLOOD, AttackType.UDP_FLOOD}
)


@dataclass(frozen=True)
class TestParameters:
    duration_minutes: int
    attacks_per_minute: int
    target_bandwidth: Fraction
    ids_id: str
    flood_alert_threshold: int = DEFAULT_FLOOD_THRESHOLD

    __test__ = False  # not a pytest class

    def __post_init__(self):
        object.__setattr__(self, "target_bandwidth", Fraction(self.target_bandwidth))
        if not isinstance(self.duration_minutes, int) or self.duration_minutes < 1:
            raise ValidationError(f"duration_minutes must be >= 1, got {self.duration_minutes}")
        if not isinstance(self.attacks_per_minute, int) or self.attacks_per_minute < 1:
            raise ValidationError(f"attacks_per_minute must be >= 1, got {self.attacks_per_minute}")
        if self.target_bandwidth <= 0:
            raise ValidationError(f"target_bandwidth must be > 0, got {self.target_bandwidth}")
        if not self.ids_id or any(c.isspace() for c in self.ids_id):
            raise ValidationError(f"ids_id must be a non-empty token, got {self.ids_id!r}")
        if not isinstance(self.flood_alert_threshold, int) or self.flood_alert_threshold < 1:
            raise ValidationError(
                f"flood_alert_threshold must be >= 1, got {self.flood_alert_threshold}")


@dataclass(frozen=True)
class ScheduledAttack:
    attack_type: AttackType
    trace_id: str
    source_address: str


@dataclass(frozen=True)
class AttackPlan:
    params: TestParameters
    schedule: Mapping[int, tuple[ScheduledAttack, ...]]

    def __post_init__(self):
        object.__setattr__(
            self, "schedule", {m: tuple(v) for m, v in sorted(self.schedule.items())})
        _validate_schedule(self.params, self.schedule)

    def instances(self) -> Iterator[tuple[int, ScheduledAttack]]:
        """Yield ``(minute, attack)`` in schedule order."""
        for minute, attacks in self.schedule.items():
            for attack in attacks:
                yield minute, attack

    @property
    def source_addresses(self) -> set[str]:
        return {a.source_address for _, a in self.instances()}

    def __len__(self) -> int:
        return sum(len(v) for v in self.schedule.values())


def _validate_schedule(params: TestParameters, schedule, lines=None, source=None):
    # ``lines`` maps (minute, index) -> file line number for error reporting.
    lines = lines or {}
    seen_src: dict[str, tuple[int, int]] = {}
    for minute, attacks in schedule.items():
        if not isinstance(minute, int) or not 0 <= minute < params.duration_minutes:
            line = lines.get((minute, 0))
            raise ValidationError(
                f"minute {minute} outside [0, {params.duration_minutes})", source, line)
        for i, attack in enumerate(attacks):
            line = lines.get((minute, i))
            if not isinstance(attack.attack_type, AttackType):
                raise ValidationError(f"unknown attack type {attack.attack_type!r}", source, line)
            try:
                ipaddress.IPv4Address(attack.source_address)
            except ValueError:
                raise ValidationError(
                    f"invalid IPv4 source address {attack.source_address!r}", source, line) from None
            if attack.source_address in seen_src:
                first = lines.get(seen_src[attack.source_address])
                where = f" (first used on line {first})" if first else ""
                raise ValidationError(
                    f"duplicate source address {attack.source_address}{where}", source, line)
            seen_src[attack.source_address] = (minute, i)
    for minute in range(params.duration_minutes):
        attacks = schedule.get(minute, ())
        if len(attacks) != params.attacks_per_minute:
            line = lines.get((minute, max(len(attacks) - 1, 0)), lines.get("M"))
            raise ValidationError(
                f"minute {minute} has {len(attacks)} attacks, expected "
                f"{params.attacks_per_minute}", source, line)


def _content_lines(text: str) -> Iterator[tuple[int, str]]:
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


_HEADER_KEYS = {"M", "APM", "BW_GBPS", "IDS", "FLOOD_THRESHOLD"}


def parse_plan(text: str, source: str | None = None) -> AttackPlan:
    headers: dict[str, tuple[str, int]] = {}
    rows: list[tuple[int, int, AttackType, str, str]] = []
    for lineno, line in _content_lines(text):
        if "=" in line and not line[0].isdigit():
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in _HEADER_KEYS:
                raise ParseError(f"unknown header {key!r}", source, lineno)
            if key in headers:
                raise ParseError(f"duplicate header {key!r}", source, lineno)
            headers[key] = (value.strip(), lineno)
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ParseError(
                f"expected '<minute> <attack_type> <trace_id> <source_ipv4>', got {line!r}",
                source, lineno)
        minute_s, type_s, trace_id, src = parts
        try:
            minute = int(minute_s)
        except ValueError:
            raise ParseError(f"bad minute {minute_s!r}", source, lineno) from None
        try:
            attack_type = AttackType.parse(type_s)
        except ValueError as exc:
            raise ValidationError(str(exc), source, lineno) from None
        rows.append((lineno, minute, attack_type, trace_id, src))

    missing = {"M", "APM", "BW_GBPS", "IDS"} - headers.keys()
    if missing:
        raise ParseError(f"missing header(s): {', '.join(sorted(missing))}", source)

    def header_int(key, default=None):
        if key not in headers:
            return default
        value, lineno = headers[key]
        try:
            return int(value)
        except ValueError:
            raise ParseError(f"{key} must be an integer, got {value!r}", source, lineno) from None

    bw_text, bw_line = headers["BW_GBPS"]
    try:
        bw = parse_fraction(bw_text)
    except ValueError:
        raise ParseError(f"BW_GBPS must be a decimal, got {bw_text!r}", source, bw_line) from None
    try:
        params = TestParameters(
            duration_minutes=header_int("M"),
            attacks_per_minute=header_int("APM"),
            target_bandwidth=bw,
            ids_id=headers["IDS"][0],
            flood_alert_threshold=header_int("FLOOD_THRESHOLD", DEFAULT_FLOOD_THRESHOLD),
        )
    except ValidationError as exc:
        raise ValidationError(exc.reason, source) from None

    schedule: dict[int, list[ScheduledAttack]] = {}
    lines: dict = {"M": headers["M"][1]}
    for lineno, minute, attack_type, trace_id, src in rows:
        bucket = schedule.setdefault(minute, [])
        lines[(minute, len(bucket))] = lineno
        bucket.append(ScheduledAttack(attack_type, trace_id, src))
        if not 0 <= minute < params.duration_minutes:
            raise ValidationError(
                f"minute {minute} outside [0, {params.duration_minutes})", source, lineno)
    _validate_schedule(params, schedule, lines, source)
    return AttackPlan(params, schedule)


def load_plan(path) -> AttackPlan:
    path = Path(path)
    return parse_plan(path.read_text(encoding="utf-8"), source=str(path))


def dump_plan(plan: AttackPlan) -> str:
    p = plan.params
    out = [
        f"M={p.duration_minutes}",
        f"APM={p.attacks_per_minute}",
        f"BW_GBPS={format_exact(p.target_bandwidth)}",
        f"IDS={p.ids_id}",
        f"FLOOD_THRESHOLD={p.flood_alert_threshold}",
    ]
    for minute, attack in plan.instances():
        out.append(
            f"{minute} {attack.attack_type.value} {attack.trace_id} {attack.source_address}")
    return "\n".join(out) + "\n"


def write_plan(plan: AttackPlan, path) -> None:
    Path(path).write_text(dump_plan(plan), encoding="utf-8")


def generate_uniform_plan(
    duration_minutes: int,
    attacks_per_minute: int,
    target_bandwidth,
    ids_id: str,
    seed: int = 0,
    pool: str = DEFAULT_ADDRESS_POOL,
    flood_alert_threshold: int = DEFAULT_FLOOD_THRESHOLD,
    attack_types: Iterable[AttackType] | None = None,
) -> AttackPlan:
    """Sample attack types uniformly (seeded); hand out pool addresses in order.

    Trace ids are the attack type names, i.e. one prepared trace per type.
    """
    params = TestParameters(
        duration_minutes, attacks_per_minute, Fraction(target_bandwidth), ids_id,
        flood_alert_threshold)
    types = list(attack_types) if attack_types is not None else list(AttackType)
    network = ipaddress.IPv4Network(pool, strict=False)
    needed = duration_minutes * attacks_per_minute
    if network.prefixlen >= 31:
        hosts = list(network)
    else:
        hosts = network.hosts()
    addresses = []
    for addr in hosts:
        addresses.append(str(addr))
        if len(addresses) == needed:
            break
    if len(addresses) < needed:
        raise ValidationError(
            f"address pool {pool} exhausted: {needed} attacks need unique sources, "
            f"pool has {len(addresses)}")
    rng = random.Random(seed)
    schedule = {}
    it = iter(addresses)
    for minute in range(duration_minutes):
        row = []
        for _ in range(attacks_per_minute):
            kind = rng.choice(types)
            row.append(ScheduledAttack(kind, kind.value, next(it)))
        schedule[minute] = tuple(row)
    return AttackPlan(params, schedule)


# -- priorities -------------------------------------------------------------


@dataclass(frozen=True)
class PriorityEntry:
    message_pattern: str
    priority: int

    REQUIRED = 0
    OPTIONAL = 1

    def __post_init__(self):
        if self.priority not in (0, 1):
            raise ValidationError(f"priority must be 0 or 1, got {self.priority!r}")
        if not self.message_pattern:
            raise ValidationError("empty message pattern")
        if "*" in self.message_pattern[:-1]:
            raise ValidationError(
                f"only a trailing '*' wildcard is supported: {self.message_pattern!r}")

    @property
    def is_wildcard(self) -> bool:
        return self.message_pattern.endswith("*")

    @property
    def prefix(self) -> str:
        return self.message_pattern[:-1] if self.is_wildcard else self.message_pattern

    def matches(self, message: str) -> bool:
        if self.is_wildcard:
            return message.startswith(self.prefix)
        return message == self.message_pattern


@dataclass(frozen=True)
class ExpectationProfile:
    entries: Mapping[AttackType, tuple[PriorityEntry, ...]]
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        entries = {t: tuple(self.entries.get(t, ())) for t in AttackType}
        for kind, items in entries.items():
            if items and not any(e.priority == 0 for e in items):
                raise ValidationError(
                    f"{kind.value}: no priority-0 entry, detection would be unverifiable")
        object.__setattr__(self, "entries", entries)

    def for_type(self, kind: AttackType) -> tuple[PriorityEntry, ...]:
        return self.entries[kind]

    def required(self, kind: AttackType) -> tuple[PriorityEntry, ...]:
        return tuple(e for e in self.entries[kind] if e.priority == 0)


def parse_priorities(text: str, source: str | None = None) -> ExpectationProfile:
    entries: dict[AttackType, list[PriorityEntry]] = {}
    for lineno, line in _content_lines(text):
        parts = [p.strip() for p in line.split("|", 2)]
        if len(parts) != 3:
            raise ParseError(
                f"expected '<attack_type> | <priority> | <message_pattern>', got {line!r}",
                source, lineno)
        type_s, prio_s, pattern = parts
        try:
            kind = AttackType.parse(type_s)
        except ValueError as exc:
            raise ValidationError(str(exc), source, lineno) from None
        if prio_s not in ("0", "1"):
            raise ValidationError(f"invalid priority {prio_s!r} (must be 0 or 1)", source, lineno)
        try:
            entry = PriorityEntry(pattern, int(prio_s))
        except ValidationError as exc:
            raise ValidationError(exc.reason, source, lineno) from None
        entries.setdefault(kind, []).append(entry)
    warnings = []
    for kind in AttackType:
        if kind not in entries:
            msg = f"no priority entries for attack type {kind.value}"
            warnings.append(msg)
            log.warning("%s%s", f"{source}: " if source else "", msg)
    try:
        return ExpectationProfile(entries, tuple(warnings))
    except ValidationError as exc:
        raise ValidationError(exc.reason, source) from None


def load_priorities(path) -> ExpectationProfile:
    path = Path(path)
    return parse_priorities(path.read_text(encoding="utf-8"), source=str(path))


def dump_priorities(profile: ExpectationProfile) -> str:
    out = []
    for kind, items in profile.entries.items():
        for e in items:
            out.append(f"{kind.value} | {e.priority} | {e.message_pattern}")
    return "\n".join(out) + ("\n" if out else "")


# -- message mapping --------------------------------------------------------


@dataclass(frozen=True)
class MessageMapping:
    """Equivalence classes folding redundant signatures onto one canonical name."""

    classes: Mapping[str, frozenset[str]] = field(default_factory=dict)

    def __post_init__(self):
        classes = {c: frozenset(m) for c, m in self.classes.items()}
        lookup: dict[str, str] = {}
        for canonical, members in sorted(classes.items()):
            for member in sorted(members):
                if member in lookup and lookup[member] != canonical:
                    raise ValidationError(
                        f"message {member!r} appears in classes {lookup[member]!r} "
                        f"and {canonical!r}")
                lookup[member] = canonical
        # A canonical name that is a member of some other class would make
        # canonicalize non-idempotent.
        for canonical in classes:
            if canonical in lookup and lookup[canonical] != canonical:
                raise ValidationError(
                    f"canonical name {canonical!r} is also a member of class "
                    f"{lookup[canonical]!r}")
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "_lookup", lookup)

    def canonicalize(self, message: str) -> str:
        return self._lookup.get(message, message)

    def members(self, canonical: str) -> frozenset[str]:
        return self.classes.get(canonical, frozenset({canonical}))


IDENTITY_MAPPING = MessageMapping()


def canonicalize(mapping: MessageMapping, message: str) -> str:
    return mapping.canonicalize(message)


def parse_mapping(text: str, source: str | None = None) -> MessageMapping:
    classes: dict[str, set[str]] = {}
    owner: dict[str, tuple[str, int]] = {}
    for lineno, line in _content_lines(text):
        canonical, sep, rest = line.partition("<=")
        canonical = canonical.strip()
        if not sep or not canonical:
            raise ParseError(
                f"expected '<canonical> <= <member>, ...', got {line!r}", source, lineno)
        members = [m.strip() for m in rest.split(",") if m.strip()]
        if not members:
            raise ParseError(f"class {canonical!r} has no members", source, lineno)
        for member in members:
            if member in owner and owner[member][0] != canonical:
                raise ValidationError(
                    f"member {member!r} already belongs to class {owner[member][0]!r} "
                    f"(line {owner[member][1]})", source, lineno)
            owner[member] = (canonical, lineno)
        classes.setdefault(canonical, set()).update(members)
    try:
        return MessageMapping(classes)
    except ValidationError as exc:
        raise ValidationError(exc.reason, source) from None


def load_mapping(path) -> MessageMapping:
    path = Path(path)
    return parse_mapping(path.read_text(encoding="utf-8"), source=str(path))


def dump_mapping(mapping: MessageMapping) -> str:
    out = [f"{c} <= {', '.join(sorted(m))}" for c, m in sorted(mapping.classes.items())]
    return "\n".join(out) + ("\n" if out else "")
