"""Drive one test (or a phase of tests) through the fixed phase sequence.

    Start -> WaitForIDS -> Monitoring -> Evaluation -> Output -> End -> Resting

Logical time is measured in seconds of the un-compressed run; with a time
compression of N, one logical minute takes N real seconds. All timestamps
written to artifacts are logical ("virtual wall clock") epochs, so
post-processing never sees the compression.
"""

from __future__ import annotations

import json
import logging
import math
import queue
import random
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

from ._num import format_exact, parse_fraction
from .adapters.mock import AttackOffer, OfferedInterval
from .adapters.records import quantize_us
from .errors import (
    ClockSkewError, IdsNotReadyError, InfrastructureError, ParseError, ReplayLagError,
    ValidationError,
)
from .monitor import format_monitor_line
from .plan import AttackPlan, AttackType, generate_uniform_plan, write_plan
from .traceprep import SYNTH_ATTACKER, read_capture, synth_attack_capture
from .traceprep.prepare import strip_responses

log = logging.getLogger(__name__)

PHASES = ("Start", "WaitForIDS", "Monitoring", "Evaluation", "Output", "End", "Resting")
MINUTE = 60
BACKGROUND = "background"
ATTACK = "attack"
BACKGROUND_PACKET_BYTES = 1500
DEFAULT_TARGET = "10.0.1.2"


@dataclass(frozen=True)
class SendEvent:
    due: Fraction
    trace_id: str
    kind: str
    source_address: str | None = None
    attack_type: AttackType | None = None
    minute: int | None = None


def build_timeline(plan: AttackPlan, seed: int = 0, background_cadence=1) -> list[SendEvent]:
    """Attack events spread over their minute plus periodic background events.

    Each attack of minute m gets its own slot of width 60/n inside
    [60m, 60(m+1)) and a seeded uniform offset within the slot.
    """
    rng = random.Random(seed)
    cadence = Fraction(background_cadence)
    events = []
    for minute, attacks in plan.schedule.items():
        n = len(attacks)
        for j, attack in enumerate(attacks):
            offset = quantize_us((j + Fraction(rng.random())) * Fraction(MINUTE, n))
            offset = min(offset, Fraction(MINUTE) - Fraction(1, 10**6))
            events.append(SendEvent(MINUTE * minute + offset, attack.trace_id, ATTACK,
                                    attack.source_address, attack.attack_type, minute))
    if cadence > 0:
        end = MINUTE * plan.params.duration_minutes
        k = 0
        while k * cadence < end:
            events.append(SendEvent(k * cadence, BACKGROUND, BACKGROUND))
            k += 1
    events.sort(key=lambda e: (e.due, e.kind != ATTACK, e.source_address or "", e.trace_id))
    return events


# -- deployment profile -----------------------------------------------------

_PROFILE_KEYS = {
    "mode": str, "clock_skew_tolerance": Fraction, "time_compress": Fraction,
    "ready_timeout": Fraction, "resting_seconds": Fraction, "interval": Fraction,
    "target_address": str, "ids_cmd": str, "replay_cmd": str, "background_cmd": str,
    "monitor_cmd_sender": str, "monitor_cmd_receiver": str, "monitor_cmd_ids": str,
    "clock_cmd_sender": str, "clock_cmd_receiver": str, "clock_cmd_ids": str,
    "mock_capacity_gbps": Fraction, "mock_degradation": Fraction, "mock_knee": int,
    "mock_stats_style": str, "mock_memory_bytes": int, "mock_ready_delay": Fraction,
    "mock_base_cpu": Fraction, "mock_cores": int, "mock_aliases": str,
}
_ENDPOINT_KEYS = {k for k in _PROFILE_KEYS if k.endswith("_cmd") or "_cmd_" in k}


@dataclass(frozen=True)
class DeploymentProfile:
    mode: str = "mock"
    endpoints: dict[str, str] = field(default_factory=dict)
    clock_skew_tolerance: Fraction = Fraction(1)
    time_compress: Fraction = Fraction(60)      # real seconds per logical minute
    ready_timeout: Fraction = Fraction(60)      # logical seconds
    resting_seconds: Fraction = Fraction(10)    # logical seconds
    interval: Fraction = Fraction(1)            # logical seconds per monitor sample
    target_address: str = DEFAULT_TARGET
    mock: dict = field(default_factory=dict)    # raw mock_* settings

    def __post_init__(self):
        if self.mode not in ("mock", "external"):
            raise ValidationError(f"mode must be 'mock' or 'external', got {self.mode!r}")
        if self.mode == "external" and "ids_cmd" not in self.endpoints:
            raise ValidationError("external mode needs an ids_cmd endpoint")
        if self.time_compress <= 0:
            raise ValidationError("time_compress must be positive")
        if self.interval <= 0 or MINUTE % self.interval:
            raise ValidationError("interval must divide 60 seconds")

    @property
    def scale(self) -> float:
        """Real seconds per logical second."""
        return float(self.time_compress) / MINUTE

    def with_overrides(self, **kw) -> "DeploymentProfile":
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        mock = dict(self.mock)
        for key, value in kw.items():
            if value is None:
                continue
            if key.startswith("mock_"):
                mock[key] = value
            else:
                values[key] = value
        values["mock"] = mock
        return DeploymentProfile(**values)


def parse_profile(text: str, source: str | None = None) -> DeploymentProfile:
    values: dict = {}
    endpoints: dict[str, str] = {}
    mock: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or key not in _PROFILE_KEYS:
            raise ParseError(f"unknown or malformed profile line {line!r}", source, lineno)
        kind = _PROFILE_KEYS[key]
        try:
            parsed = parse_fraction(value) if kind is Fraction else kind(value)
        except ValueError:
            raise ParseError(f"bad value for {key}: {value!r}", source, lineno) from None
        if key in _ENDPOINT_KEYS:
            endpoints[key] = value
        elif key.startswith("mock_"):
            mock[key] = parsed
        else:
            values[key] = parsed
    try:
        return DeploymentProfile(endpoints=endpoints, mock=mock, **values)
    except ValidationError as exc:
        raise ValidationError(exc.reason, source) from None


def load_profile(path) -> DeploymentProfile:
    path = Path(path)
    return parse_profile(path.read_text(encoding="utf-8"), str(path))


# -- traces -----------------------------------------------------------------


@dataclass(frozen=True)
class TraceInfo:
    trace_id: str
    packets: int
    bytes: int
    path: Path | None = None


class TraceLibrary:
    """Packet/byte sizes of the traces a plan refers to.

    ``traces_dir/<trace_id>.pcap`` is used when present. In mock mode a
    missing trace falls back to a synthetic capture of the attack type.
    """

    def __init__(self, traces_dir=None, synthesize: bool = True):
        self.traces_dir = Path(traces_dir) if traces_dir else None
        self.synthesize = synthesize
        self._cache: dict[str, TraceInfo] = {}

    def get(self, trace_id: str, attack_type: AttackType) -> TraceInfo:
        if trace_id in self._cache:
            return self._cache[trace_id]
        path = self.traces_dir / f"{trace_id}.pcap" if self.traces_dir else None
        if path is not None and path.exists():
            packets = read_capture(path)
            info = TraceInfo(trace_id, len(packets), sum(p.orig_len for p in packets), path)
        elif self.synthesize:
            seed = int.from_bytes(trace_id.encode()[:8].ljust(8, b"\0"), "big")
            packets = strip_responses(synth_attack_capture(attack_type, seed), SYNTH_ATTACKER)
            info = TraceInfo(trace_id, len(packets), sum(p.orig_len for p in packets))
        else:
            raise ValidationError(f"trace {trace_id!r} not found in {self.traces_dir}")
        self._cache[trace_id] = info
        return info

    def check(self, plan: AttackPlan) -> None:
        for _, attack in plan.instances():
            self.get(attack.trace_id, attack.attack_type)


# -- artifacts --------------------------------------------------------------


@dataclass(frozen=True)
class ArtifactFile:
    name: str
    role: str
    type: str


@dataclass
class RawOutputs:
    artifacts_dir: Path
    files: list[ArtifactFile]
    aborted: bool = False
    error: str | None = None
    eval_window: tuple[Fraction, Fraction] | None = None
    phases: list[str] = field(default_factory=list)

    def path(self, type_: str, role: str | None = None) -> Path | None:
        for f in self.files:
            if f.type == type_ and (role is None or f.role == role):
                return self.artifacts_dir / f.name
        return None


class PhaseLog:
    def __init__(self, path: Path):
        self.path = path
        self.names: list[str] = []
        self.epochs: dict[str, Fraction] = {}
        self._f = open(path, "w", encoding="utf-8")

    def enter(self, name: str, epoch: Fraction) -> None:
        expected = PHASES[len(self.names)]
        if name != expected:  # pragma: no cover - programming error
            raise RuntimeError(f"phase {name} out of order, expected {expected}")
        self.names.append(name)
        self.epochs[name] = epoch
        self._f.write(f"{format_exact(epoch)} PHASE {name}\n")
        self._f.flush()

    def abort(self, epoch: Fraction, reason: str) -> None:
        self._f.write(f"{format_exact(epoch)} ABORT {reason.splitlines()[0]}\n")
        self._f.flush()

    def close(self) -> None:
        self._f.close()


def read_phase_log(path) -> tuple[list[tuple[Fraction, str]], str | None]:
    """Return ``[(epoch, phase), ...]`` and the abort reason, if any."""
    phases, abort = [], None
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        parts = raw.split(" ", 2)
        if len(parts) < 3 or parts[1] not in ("PHASE", "ABORT"):
            raise ParseError(f"malformed phase line {raw!r}", str(path), lineno)
        if parts[1] == "PHASE":
            phases.append((parse_fraction(parts[0]), parts[2]))
        else:
            abort = parts[2]
    return phases, abort


def phase_sequence_ok(names: Sequence[str], aborted: bool) -> bool:
    """Complete sequence for finished runs, an in-order prefix for aborted ones."""
    if aborted:
        return list(names) == list(PHASES[:len(names)])
    return tuple(names) == PHASES


# -- clock and collectors ---------------------------------------------------


class RunClock:
    """Virtual wall clock advancing 1/scale logical seconds per real second."""

    def __init__(self, scale: float, base_epoch: float | None = None):
        self.scale = scale
        self.base = Fraction(base_epoch if base_epoch is not None else time.time())
        self._mono0 = time.monotonic()

    def now(self) -> Fraction:
        return quantize_us(self.base + Fraction(time.monotonic() - self._mono0) / Fraction(self.scale))

    def sleep_until(self, epoch: Fraction) -> None:
        delay = float(epoch - self.now()) * self.scale
        if delay > 0:
            time.sleep(delay)

    def sleep(self, logical_seconds) -> None:
        if logical_seconds > 0:
            time.sleep(float(logical_seconds) * self.scale)


_STOP = object()


class Collector(threading.Thread):
    """Monitor collector for one role; only ever writes its own files."""

    def __init__(self, role: str, artifacts_dir: Path, cores: int = 4, memory: int = 50 * 10**6):
        super().__init__(name=f"monitor-{role}", daemon=True)
        self.role = role
        self.cores = cores
        self.memory = memory
        self.inbox: queue.Queue = queue.Queue()
        self.done = threading.Event()
        self.monitor_path = artifacts_dir / f"monitor_{role}.log"
        self.packets_path = artifacts_dir / f"{role}_packets.log"
        self._packets = 0

    def run(self) -> None:
        with open(self.monitor_path, "w", encoding="utf-8") as mon, \
                open(self.packets_path, "w", encoding="utf-8") as pk:
            while True:
                item = self.inbox.get()
                if item is _STOP:
                    mon.flush()
                    pk.flush()
                    self.done.set()
                    return
                epoch, packets, nbytes = item
                self._packets += packets
                load = Fraction(1, 20) if nbytes else Fraction(0)
                out_bytes, in_bytes = (nbytes, 0) if self.role == "sender" else (0, nbytes)
                mon.write(format_monitor_line(epoch, [load] * self.cores, self.memory,
                                              in_bytes, out_bytes) + "\n")
                pk.write(f"{format_exact(epoch)} {self._packets}\n")

    def sample(self, epoch, packets: int = 0, nbytes: int = 0) -> None:
        self.inbox.put((epoch, packets, nbytes))

    def stop(self, timeout: float = 10.0) -> bool:
        self.inbox.put(_STOP)
        return self.done.wait(timeout)


class CommandMonitor:
    """External-mode monitor: a command writing monitor_<role>.log itself."""

    def __init__(self, role: str, command: str, artifacts_dir: Path):
        self.role = role
        argv = shlex.split(command.format(artifacts=str(artifacts_dir), role=role))
        self.proc = subprocess.Popen(argv)

    def sample(self, *args) -> None:
        pass

    def stop(self, timeout: float = 10.0) -> bool:
        self.proc.terminate()
        try:
            self.proc.wait(timeout=timeout)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            return False
        return True


def measure_clock_offsets(profile: DeploymentProfile) -> dict[str, float]:
    """Run each ``clock_cmd_<role>`` and compare its epoch with ours."""
    offsets = {}
    for role in ("sender", "receiver", "ids"):
        cmd = profile.endpoints.get(f"clock_cmd_{role}")
        if not cmd:
            continue
        before = time.time()
        out = subprocess.run(shlex.split(cmd), capture_output=True, text=True, timeout=30)
        after = time.time()
        try:
            remote = float(out.stdout.split()[0])
        except (IndexError, ValueError):
            raise ClockSkewError(f"clock command for {role} printed {out.stdout!r}") from None
        offsets[role] = remote - (before + after) / 2
        if abs(offsets[role]) > profile.clock_skew_tolerance:
            raise ClockSkewError(
                f"{role} clock off by {offsets[role]:.3f}s "
                f"(tolerance {float(profile.clock_skew_tolerance)}s)")
    return offsets


# -- the run ----------------------------------------------------------------


class ReplayDriver:
    """Paces the timeline interval by interval and feeds IDS and collectors."""

    def __init__(self, plan: AttackPlan, events: list[SendEvent], traces: TraceLibrary,
                 profile: DeploymentProfile, clock: RunClock, eval_start: Fraction,
                 adapter, collectors: dict, artifacts_dir: Path):
        self.plan = plan
        self.events = events
        self.traces = traces
        self.profile = profile
        self.clock = clock
        self.eval_start = eval_start
        self.adapter = adapter
        self.collectors = collectors
        self.artifacts_dir = artifacts_dir
        self.error: Exception | None = None
        self._procs: list[subprocess.Popen] = []

    def intervals(self):
        step = self.profile.interval
        n = int(MINUTE * self.plan.params.duration_minutes / step)
        bg_bytes = math.ceil(self.plan.params.target_bandwidth * 10**9 / 8 * step)
        bg_packets = math.ceil(Fraction(bg_bytes, BACKGROUND_PACKET_BYTES))
        target = self.profile.target_address
        apm = self.plan.params.attacks_per_minute
        attacks = [e for e in self.events if e.kind == ATTACK]
        i = 0
        for k in range(n):
            start, end = k * step, (k + 1) * step
            offers = []
            while i < len(attacks) and attacks[i].due < end:
                e = attacks[i]
                info = self.traces.get(e.trace_id, e.attack_type)
                offers.append(AttackOffer(e.trace_id, e.attack_type, e.source_address, target,
                                          info.packets, info.bytes, e.due, e.minute, apm))
                i += 1
            yield OfferedInterval(k, start, self.eval_start + start, step, bg_packets,
                                  bg_bytes, tuple(offers))

    def _external_replay(self, interval: OfferedInterval) -> None:
        cmd = self.profile.endpoints.get("replay_cmd")
        if not cmd:
            return
        for a in interval.attacks:
            info = self.traces.get(a.trace_id, a.attack_type)
            argv = shlex.split(cmd.format(trace=info.path or a.trace_id, src=a.source_address,
                                          target=a.target_address, trace_id=a.trace_id))
            self._procs.append(subprocess.Popen(argv))

    def run(self) -> None:
        try:
            external = self.profile.mode == "external"
            bg_cmd = self.profile.endpoints.get("background_cmd")
            bg = None
            if external and bg_cmd:
                bg = subprocess.Popen(shlex.split(bg_cmd.format(
                    bandwidth=format_exact(self.plan.params.target_bandwidth),
                    seconds=MINUTE * self.plan.params.duration_minutes)))
            for interval in self.intervals():
                self.clock.sleep_until(interval.epoch)
                lag = self.clock.now() - interval.epoch
                if lag > MINUTE:
                    raise ReplayLagError(
                        f"replay {float(lag):.1f}s behind schedule at t={interval.t}")
                if external:
                    self._external_replay(interval)
                self.adapter.offer(interval)
                end_epoch = interval.epoch + interval.duration
                for c in self.collectors.values():
                    c.sample(end_epoch, interval.packets, interval.bytes)
            self.clock.sleep_until(self.eval_start + MINUTE * self.plan.params.duration_minutes)
            if bg is not None:
                bg.terminate()
                bg.wait()
            for p in self._procs:
                p.wait()
        except Exception as exc:  # surfaced by the coordinator
            self.error = exc


def _manifest(out: RawOutputs, profile: DeploymentProfile, ids_id: str,
              offsets: dict[str, float]) -> dict:
    window = out.eval_window
    return {
        "ids_id": ids_id,
        "mode": profile.mode,
        "aborted": out.aborted,
        "error": out.error,
        "phases": out.phases,
        "eval_window": [format_exact(w) for w in window] if window else None,
        "time_compress": format_exact(profile.time_compress),
        "interval": format_exact(profile.interval),
        "clock_offsets": offsets,
        "files": [{"name": f.name, "role": f.role, "type": f.type} for f in out.files],
    }


def read_manifest(artifacts_dir) -> dict:
    path = Path(artifacts_dir) / "manifest"
    if not path.exists():
        raise ValidationError(f"no manifest in {artifacts_dir}")
    return json.loads(path.read_text(encoding="utf-8"))


def run_test(profile: DeploymentProfile, plan: AttackPlan, ids_adapter, artifacts_dir,
             traces: TraceLibrary | None = None, seed: int = 0,
             clock: RunClock | None = None) -> RawOutputs:
    artifacts_dir = Path(artifacts_dir)
    artifacts_dir.mkdir(parents=True, exist_ok=True)
    traces = traces or TraceLibrary(synthesize=profile.mode == "mock")
    clock = clock or RunClock(profile.scale)
    plog = PhaseLog(artifacts_dir / "phase.log")
    ids_id = getattr(ids_adapter, "ids_id", plan.params.ids_id)
    files = [ArtifactFile("plan.txt", "sender", "plan"), ArtifactFile("phase.log", "harness", "phases")]
    out = RawOutputs(artifacts_dir, files)
    collectors: dict = {}
    offsets: dict[str, float] = {}
    ids_started = False
    stopped = False

    def shutdown():
        for c in collectors.values():
            c.stop()
        if ids_started and not stopped:
            ids_adapter.stop()
            ids_adapter.kill()

    try:
        # Start: start the IDS, read in the attacks.
        plog.enter("Start", clock.now())
        if profile.mode == "external":
            offsets = measure_clock_offsets(profile)
        write_plan(plan, artifacts_dir / "plan.txt")
        events = build_timeline(plan, seed=seed, background_cadence=profile.interval)
        traces.check(plan)
        ids_adapter.start(artifacts_dir, profile.scale)
        ids_started = True
        files.extend(ArtifactFile(*a) for a in ids_adapter.artifacts())

        plog.enter("WaitForIDS", clock.now())
        if not ids_adapter.wait_ready(float(profile.ready_timeout) * profile.scale):
            raise IdsNotReadyError(
                f"IDS {ids_id} not ready after {float(profile.ready_timeout)} logical seconds")

        # Monitoring: CPU/memory/traffic on the IDS, outgoing on the sender,
        # incoming on the receiver.
        mon_epoch = clock.now()
        plog.enter("Monitoring", mon_epoch)
        for role in ("sender", "receiver"):
            cmd = profile.endpoints.get(f"monitor_cmd_{role}")
            if profile.mode == "external" and cmd:
                collectors[role] = CommandMonitor(role, cmd, artifacts_dir)
            else:
                c = Collector(role, artifacts_dir)
                c.start()
                c.sample(mon_epoch)
                collectors[role] = c
                files.append(ArtifactFile(f"{role}_packets.log", role, "packets"))
            files.append(ArtifactFile(f"monitor_{role}.log", role, "monitor"))
        ids_adapter.start_monitor(mon_epoch)
        clock.sleep(profile.interval)

        eval_start = clock.now()
        plog.enter("Evaluation", eval_start)
        driver = ReplayDriver(plan, events, traces, profile, clock, eval_start, ids_adapter,
                              collectors, artifacts_dir)
        worker = threading.Thread(target=driver.run, name="replay", daemon=True)
        worker.start()
        worker.join()
        if driver.error is not None:
            raise driver.error

        out_epoch = clock.now()
        plog.enter("Output", out_epoch)
        out.eval_window = (eval_start, out_epoch)
        for c in collectors.values():
            c.stop()
        collectors.clear()
        if not ids_adapter.stop(timeout=max(10.0, 60 * profile.scale)):
            raise InfrastructureError(f"IDS {ids_id} did not acknowledge STOP")
        stopped = True

        plog.enter("End", clock.now())
        ids_adapter.kill()

        plog.enter("Resting", clock.now())
        clock.sleep(profile.resting_seconds)
    except Exception as exc:
        plog.abort(clock.now(), f"{type(exc).__name__}: {exc}")
        out.aborted = True
        out.error = f"{type(exc).__name__}: {exc}"
        try:
            shutdown()
        finally:
            out.phases = list(plog.names)
            plog.close()
            _write_manifest(out, profile, ids_id, offsets)
        if isinstance(exc, InfrastructureError):
            exc.outputs = out
            raise
        if isinstance(exc, ValidationError):
            raise
        raise InfrastructureError(out.error, out) from exc
    out.phases = list(plog.names)
    plog.close()
    _write_manifest(out, profile, ids_id, offsets)
    return out


def _write_manifest(out, profile, ids_id, offsets):
    files = [f for f in out.files if (out.artifacts_dir / f.name).exists()]
    out.files = files
    (out.artifacts_dir / "manifest").write_text(
        json.dumps(_manifest(out, profile, ids_id, offsets), indent=2, sort_keys=True) + "\n",
        encoding="utf-8")


@dataclass
class PhaseResult:
    outputs: list[RawOutputs]
    error: Exception | None = None


def run_dir_name(index: int, plan: AttackPlan) -> str:
    p = plan.params
    return f"{index:03d}_{p.ids_id}_bw{format_exact(p.target_bandwidth)}_apm{p.attacks_per_minute}"


def run_phase(profile: DeploymentProfile, plans: Sequence[AttackPlan], ids_adapter,
              artifacts_root, traces: TraceLibrary | None = None, seed: int = 0,
              on_result: Callable[[RawOutputs], None] | None = None) -> PhaseResult:
    """Run every plan in order; stop at the first infrastructure error."""
    if not plans:
        raise ValidationError("run_phase needs at least one plan")
    root = Path(artifacts_root)
    traces = traces or TraceLibrary(synthesize=profile.mode == "mock")
    results = []
    for i, plan in enumerate(plans):
        try:
            out = run_test(profile, plan, ids_adapter, root / run_dir_name(i, plan), traces, seed)
        except InfrastructureError as exc:
            log.error("phase stopped at test %d: %s", i, exc)
            return PhaseResult(results, exc)
        results.append(out)
        if on_result:
            on_result(out)
    return PhaseResult(results)


def grid_plans(bandwidths: Sequence, attack_rates: Sequence[int], duration_minutes: int,
               ids_id: str, seed: int = 0, **kw) -> list[AttackPlan]:
    """One uniform plan per (bandwidth, attacks-per-minute) combination."""
    plans = []
    for bw in bandwidths:
        for apm in attack_rates:
            plans.append(generate_uniform_plan(duration_minutes, apm, bw, ids_id, seed=seed, **kw))
    return plans
