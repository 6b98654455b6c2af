"""Protocol automata over UDP sockets."""
from .config import HarnessConfig, HarnessConfigError, parse_addr
from .destination import DestinationReport, recompute_naoi, run_destination
from .sensors import PROFILES, SensorEmulator, payload_ok
from .source import DestinationUnreachable, SourceReport, run_source

__all__ = [
    "PROFILES", "DestinationReport", "DestinationUnreachable", "HarnessConfig",
    "HarnessConfigError", "SensorEmulator", "SourceReport", "parse_addr", "payload_ok",
    "recompute_naoi", "run_destination", "run_source",
]
