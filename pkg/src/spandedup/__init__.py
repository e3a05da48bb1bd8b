"""Detection and removal of SPAN/mirror-port duplicate packets."""

__version__ = "0.1.0"

from .compare import ALL_TYPES, CompareStats, DuplicateType, classify_pair
from .packet import DissectedPacket, ProtocolClass, RawPacket, dissect
from .pcapio import read_capture, write_capture
from .window import (
    CountWindow,
    DuplicateVerdict,
    TimeWindow,
    WindowConfig,
    WindowEngine,
    distance_stats,
    find_duplicates,
    process_stream,
)

__all__ = [
    "ALL_TYPES",
    "CompareStats",
    "CountWindow",
    "DissectedPacket",
    "DuplicateType",
    "DuplicateVerdict",
    "ProtocolClass",
    "RawPacket",
    "TimeWindow",
    "WindowConfig",
    "WindowEngine",
    "classify_pair",
    "dissect",
    "distance_stats",
    "find_duplicates",
    "process_stream",
    "read_capture",
    "write_capture",
]
