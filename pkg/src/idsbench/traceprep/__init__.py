from .packets import PacketRecord, build_frame, decode_frame, internet_checksum
from .pcap import read_capture, write_capture
from .prepare import (
    AttackTrace, prepare_trace, read_trace, rebase_timestamps, rewrite_source,
    strip_responses, write_trace,
)
from .synth import SYNTH_ATTACKER, SYNTH_TARGET, synth_attack_capture

__all__ = [
    "AttackTrace", "PacketRecord", "SYNTH_ATTACKER", "SYNTH_TARGET", "build_frame",
    "decode_frame", "internet_checksum", "prepare_trace", "read_capture", "read_trace",
    "rebase_timestamps", "rewrite_source", "strip_responses", "synth_attack_capture",
    "write_capture", "write_trace",
]
