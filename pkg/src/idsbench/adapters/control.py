"""IDS adapters as seen by the orchestrator, and their line-oriented control channel.

The adapter announces ``READY`` once it can analyze traffic; the harness sends
``STOP`` when the evaluation is over and the adapter answers ``STOPPED`` after
flushing its output files.
"""

from __future__ import annotations

import logging
import os
import queue
import shlex
import subprocess
import threading
import time
from pathlib import Path

from .mock import MockIdsConfig, MockIdsEngine, OfferedInterval

log = logging.getLogger(__name__)

READY = "READY"
STOP = "STOP"
STOPPED = "STOPPED"

# (file name, role, type) for every artifact an IDS adapter produces.
IDS_ARTIFACTS = (
    ("alerts.log", "ids", "alerts"),
    ("ids_stats.log", "ids", "stats"),
    ("monitor_ids.log", "ids", "monitor"),
)


class ControlChannel:
    """Two one-way queues of text lines."""

    def __init__(self):
        self._to_harness: queue.Queue[str] = queue.Queue()
        self._to_adapter: queue.Queue[str] = queue.Queue()

    # adapter side
    def emit(self, line: str) -> None:
        self._to_harness.put(line.strip())

    def command(self, timeout: float | None = None) -> str | None:
        try:
            return self._to_adapter.get(timeout=timeout)
        except queue.Empty:
            return None

    # harness side
    def send(self, line: str) -> None:
        self._to_adapter.put(line.strip())

    def expect(self, word: str, timeout: float) -> bool:
        """Block until ``word`` arrives or ``timeout`` real seconds pass."""
        deadline = time.monotonic() + timeout
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return False
            try:
                line = self._to_harness.get(timeout=remaining)
            except queue.Empty:
                return False
            if line == word:
                return True
            log.debug("control: ignoring %r while waiting for %s", line, word)


class MockIds:
    """In-process mock IDS running as one worker thread.

    Offered intervals arrive through an input queue; everything the mock
    writes goes to its own files in the artifacts directory.
    """

    def __init__(self, config: MockIdsConfig, ids_id: str = "mock"):
        self.config = config
        self.ids_id = ids_id
        self.channel = ControlChannel()
        self.engine: MockIdsEngine | None = None
        self._inbox: queue.Queue = queue.Queue()
        self._thread: threading.Thread | None = None
        self._files: dict[str, object] = {}
        self.scale = 1.0

    @property
    def observed_sources(self) -> set[str]:
        return self.engine.run.observed_sources if self.engine else set()

    def artifacts(self):
        return IDS_ARTIFACTS + (("ids_truth.log", "ids", "ground_truth"),)

    def start(self, artifacts_dir: Path, scale: float = 1.0) -> None:
        self.scale = scale
        # Fresh state on every start so one adapter can serve a whole phase.
        self.channel = ControlChannel()
        self._inbox = queue.Queue()
        self.engine = MockIdsEngine(self.config)
        for name, _, _ in self.artifacts():
            self._files[name] = open(Path(artifacts_dir) / name, "w", encoding="utf-8")
        self._thread = threading.Thread(target=self._main, name="mock-ids", daemon=True)
        self._thread.start()

    def _write(self, name: str, lines) -> None:
        f = self._files[name]
        for line in lines:
            f.write(line + "\n")

    def _main(self) -> None:
        delay = self.config.ready_delay
        ready_at = None if delay is None else time.monotonic() + delay * self.scale
        while True:
            timeout = None
            if ready_at is not None:
                timeout = max(0.0, ready_at - time.monotonic())
            try:
                item = self._inbox.get(timeout=timeout)
            except queue.Empty:
                item = None
            if ready_at is not None and time.monotonic() >= ready_at:
                self.channel.emit(READY)
                ready_at = None
            if item is None:
                continue
            if isinstance(item, OfferedInterval):
                run = self.engine.run
                marks = (len(run.alert_lines), len(run.stats_lines), len(run.monitor_lines),
                         len(run.truth_lines))
                self.engine.process(item)
                self._write("alerts.log", run.alert_lines[marks[0]:])
                self._write("ids_stats.log", run.stats_lines[marks[1]:])
                self._write("monitor_ids.log", run.monitor_lines[marks[2]:])
                self._write("ids_truth.log", run.truth_lines[marks[3]:])
            elif isinstance(item, tuple) and item[0] == "MONITOR":
                self._write("monitor_ids.log", [self.engine.idle_monitor_line(item[1])])
            elif item == STOP:
                for f in self._files.values():
                    f.flush()
                self.channel.emit(STOPPED)
                return

    # orchestrator-facing API
    def wait_ready(self, timeout: float) -> bool:
        return self.channel.expect(READY, timeout)

    def start_monitor(self, epoch) -> None:
        self._inbox.put(("MONITOR", epoch))

    def offer(self, interval: OfferedInterval) -> None:
        self._inbox.put(interval)

    def stop(self, timeout: float = 10.0) -> bool:
        if self._thread is None or not self._thread.is_alive():
            return True
        self._inbox.put(STOP)
        return self.channel.expect(STOPPED, timeout)

    def kill(self) -> None:
        if self._thread is not None and self._thread.is_alive():
            self._inbox.put(STOP)
            self._thread.join(timeout=5)
        for f in self._files.values():
            f.close()
        self._files.clear()


class ExternalIds:
    """An IDS wrapper process speaking the control protocol on stdin/stdout.

    ``command`` may contain ``{artifacts}``; the directory is also exported as
    ``IDSBENCH_RUN_DIR``. The process must write the files named in
    ``IDS_ARTIFACTS`` there.
    """

    def __init__(self, command: str, ids_id: str = "external"):
        self.command = command
        self.ids_id = ids_id
        self.channel = ControlChannel()
        self.proc: subprocess.Popen | None = None
        self._reader: threading.Thread | None = None
        self.observed_sources: set[str] = set()

    def artifacts(self):
        return IDS_ARTIFACTS

    def start(self, artifacts_dir: Path, scale: float = 1.0) -> None:
        argv = shlex.split(self.command.format(artifacts=str(artifacts_dir)))
        env = dict(os.environ, IDSBENCH_RUN_DIR=str(artifacts_dir))
        self.proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                     text=True, env=env, bufsize=1)
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self) -> None:
        for line in self.proc.stdout:
            self.channel.emit(line)

    def wait_ready(self, timeout: float) -> bool:
        return self.channel.expect(READY, timeout)

    def start_monitor(self, epoch) -> None:
        pass

    def offer(self, interval: OfferedInterval) -> None:
        # Traffic reaches a real IDS over the wire, not through the harness.
        pass

    def stop(self, timeout: float = 10.0) -> bool:
        if self.proc is None or self.proc.poll() is not None:
            return True
        try:
            self.proc.stdin.write(STOP + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError):
            return False
        return self.channel.expect(STOPPED, timeout)

    def kill(self) -> None:
        if self.proc is None:
            return
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()
        for stream in (self.proc.stdin, self.proc.stdout):
            if stream:
                stream.close()
