"""JSON run reports with a fixed field order."""

from __future__ import annotations

import datetime as _dt
import json

from . import __version__
from .compare import PRECEDENCE, CompareStats
from .window import DistanceStats, DuplicateVerdict, EmptyInput, distance_stats


class InputSummary:
    """Running packet/byte/time totals over a stream."""

    def __init__(self, path=None):
        self.path = str(path) if path is not None else None
        self.packets = 0
        self.bytes = 0
        self.first = None
        self.last = None

    def add(self, pkt):
        self.packets += 1
        self.bytes += pkt.captured_len
        if self.first is None:
            self.first = pkt.timestamp
        self.last = pkt.timestamp if self.last is None else max(self.last, pkt.timestamp)

    def track(self, packets):
        for pkt in packets:
            self.add(pkt)
            yield pkt

    @property
    def duration(self) -> float:
        return 0.0 if self.first is None else self.last - self.first

    def to_dict(self) -> dict:
        return {"path": self.path, "packets": self.packets, "bytes": self.bytes, "duration_s": self.duration}


def _pct(count: int, total: int) -> float:
    return 100.0 * count / total if total else 0.0


def comparison_dict(stats: CompareStats) -> dict:
    return {
        "pairs": stats.comparisons,
        "guard_rejections": stats.guard_rejections,
        "payload_mismatches": stats.payload_mismatches,
        "payload_matches": stats.payload_matches,
        "header_rejections": stats.header_rejections,
        "bytes_compared_histogram": [list(p) for p in stats.histogram_pairs()],
    }


def build_report(
    summary: InputSummary,
    verdicts: list[DuplicateVerdict],
    stats: CompareStats,
    config: dict,
    output: dict | None = None,
    time_bin: float = 1e-4,
) -> dict:
    counts = {t: 0 for t in PRECEDENCE}
    for v in verdicts:
        counts[v.dup_type] += 1
    try:
        dist: DistanceStats | None = distance_stats(verdicts, time_bin)
    except EmptyInput:
        dist = None
    total = summary.packets
    return {
        "tool": "spandedup",
        "version": __version__,
        "generated_at": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "input": summary.to_dict(),
        "config": config,
        "duplicates": {
            "total": len(verdicts),
            "percent": _pct(len(verdicts), total),
            "low_confidence": sum(v.low_confidence for v in verdicts),
            "by_type": {t.value: {"count": counts[t], "percent": _pct(counts[t], total)} for t in PRECEDENCE},
        },
        "output": output,
        "distance": dist.to_dict() if dist else None,
        "comparisons": comparison_dict(stats),
    }


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2) + "\n"
