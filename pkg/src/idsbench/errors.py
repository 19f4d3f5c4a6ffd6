"""Exception classes shared across the harness.

The CLI maps each family onto an exit code: ``ValidationError`` -> 1,
``HarnessError`` (runtime) -> 2, ``InfrastructureError`` -> 3.
"""

from __future__ import annotations


class HarnessError(Exception):
    """Base class for every error raised by idsbench."""


class ValidationError(HarnessError, ValueError):
    """Input did not parse or violated an invariant.

    ``source`` and ``line`` locate the offending input when known.
    """

    def __init__(self, message: str, source: str | None = None, line: int | None = None):
        self.source = source
        self.line = line
        where = ""
        if source is not None and line is not None:
            where = f"{source}:{line}: "
        elif source is not None:
            where = f"{source}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)
        self.reason = message


class ParseError(ValidationError):
    """Malformed file content."""


class PcapError(ValidationError):
    """Capture file is not a readable classic pcap."""


class InfrastructureError(HarnessError):
    """A test run could not be carried out (IDS, clocks, replay)."""

    def __init__(self, message: str, outputs=None):
        super().__init__(message)
        # Partial RawOutputs collected before the abort, if any.
        self.outputs = outputs


class IdsNotReadyError(InfrastructureError):
    pass


class ClockSkewError(InfrastructureError):
    pass


class ReplayLagError(InfrastructureError):
    pass
