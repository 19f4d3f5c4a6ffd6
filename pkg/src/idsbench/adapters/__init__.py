"""IDS output parsers and adapters (mock and external)."""

from .control import ControlChannel, ExternalIds, MockIds
from .eve import parse_suricata_eve
from .fastlog import parse_snort_fast
from .mock import (
    SNORT_LIKE, SURICATA_LIKE, AttackOffer, MockIdsConfig, MockIdsEngine, OfferedInterval,
    mock_ids_run,
)
from .records import AlertRecord, IdsStatsRecord, StatsSemantics
from .stats import PacketTotals, load_ids_stats, packet_totals, parse_snort_stats, to_runtime_averages

__all__ = [
    "AlertRecord", "AttackOffer", "ControlChannel", "ExternalIds", "IdsStatsRecord",
    "MockIds", "MockIdsConfig", "MockIdsEngine", "OfferedInterval", "PacketTotals",
    "SNORT_LIKE", "SURICATA_LIKE", "StatsSemantics", "load_ids_stats", "mock_ids_run",
    "packet_totals", "parse_snort_fast", "parse_snort_stats", "parse_suricata_eve",
    "to_runtime_averages",
]
