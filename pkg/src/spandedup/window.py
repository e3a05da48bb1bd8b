"""Sliding-window duplicate search over a packet stream.

For each packet n the window is searched newest to oldest; the first packet
that classifies as a duplicate original ends the search. Packet n then joins
the window whether or not it matched, and the window is trimmed.

The window is held in flat arrays (guard key, payload offset/length and a
shared payload byte buffer) so the guard + payload scan runs inside
``kernels.scan_window``. Header predicates run in Python only for
payload-equal candidates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from . import kernels
from .compare import ALL_TYPES, CompareStats, DuplicateType, match_headers
from .packet import LINKTYPE_ETHERNET, DissectedPacket, RawPacket, dissect

DEFAULT_WINDOW = 0.1  # seconds, used when no link parameters are known

_MALFORMED_CLASS = 4
_KEY_SHIFT = 20


class EmptyInput(ValueError):
    pass


@dataclass(frozen=True)
class TimeWindow:
    duration: float

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("time window duration must be > 0")


@dataclass(frozen=True)
class CountWindow:
    k: int | None  # None: unbounded

    def __post_init__(self):
        if self.k is not None and self.k < 1:
            raise ValueError("count window needs k >= 1")


@dataclass(frozen=True)
class WindowConfig:
    mode: TimeWindow | CountWindow = TimeWindow(DEFAULT_WINDOW)
    enabled_types: frozenset = ALL_TYPES
    strict_ttl: bool = False

    def describe(self) -> dict:
        if isinstance(self.mode, TimeWindow):
            window = {"kind": "time", "seconds": self.mode.duration}
        else:
            window = {"kind": "packets", "k": self.mode.k}
        return {
            "window": window,
            "types": [t.value for t in DuplicateType if t in self.enabled_types],
            "strict_ttl": self.strict_ttl,
        }


@dataclass(frozen=True, slots=True)
class DuplicateVerdict:
    packet_index: int
    original_index: int
    dup_type: DuplicateType
    packet_distance: int
    time_delta: float
    low_confidence: bool = False

    def to_record(self) -> dict:
        return {
            "packet_index": self.packet_index,
            "original_index": self.original_index,
            "type": self.dup_type.value,
            "packet_distance": self.packet_distance,
            "time_delta_ns": round(self.time_delta * 1e9),
            "low_confidence": self.low_confidence,
        }


def guard_key(pkt: DissectedPacket) -> int:
    cls = _MALFORMED_CLASS if pkt.malformed else int(pkt.protocol_class)
    return cls << _KEY_SHIFT | min(pkt.payload_len, (1 << _KEY_SHIFT) - 1)


class WindowEngine:
    """Single-consumer streaming detector.

    Memory is proportional to window occupancy: slots older than the window
    are compacted away when the arrays fill up.
    """

    def __init__(self, cfg: WindowConfig = WindowConfig(), link_type: int = LINKTYPE_ETHERNET,
                 stats: CompareStats | None = None, capacity: int = 1024):
        self.cfg = cfg
        self.link_type = link_type
        self.stats = stats if stats is not None else CompareStats()
        self._time_window = cfg.mode.duration if isinstance(cfg.mode, TimeWindow) else None
        self._k = None if self._time_window is not None else cfg.mode.k
        self._now = -math.inf
        self._n = 0  # packets pushed so far
        self._lo = 0  # oldest packet index still in the window
        self._base = 0  # packet index stored in slot 0
        self._keys = np.empty(capacity, np.int64)
        self._offs = np.empty(capacity, np.int64)
        self._avail = np.empty(capacity, np.int64)
        self._ts = np.empty(capacity, np.float64)
        self._pkts: list[DissectedPacket] = []
        self._buf = np.empty(capacity * 256, np.uint8)
        self._buf_end = 0

    @property
    def occupancy(self) -> int:
        return self._n - self._lo

    @property
    def window_indices(self) -> range:
        return range(self._lo, self._n)

    def _evict(self, ts: float):
        if self._time_window is not None:
            self._now = max(self._now, ts)
            cutoff = self._now - self._time_window
            lo, base, n = self._lo, self._base, self._n
            while lo < n and self._ts[lo - base] < cutoff:
                lo += 1
            self._lo = lo
        elif self._k is not None:
            self._lo = max(self._lo, self._n - self._k)

    def _reserve(self, nbytes: int):
        slots = self._n - self._base + 1
        need_bytes = self._buf_end + nbytes
        if slots <= self._keys.shape[0] and need_bytes <= self._buf.shape[0]:
            return
        drop = self._lo - self._base
        if drop:
            keep = self._n - self._lo
            byte_from = int(self._offs[drop]) if keep else self._buf_end
            for arr in (self._keys, self._offs, self._avail, self._ts):
                arr[:keep] = arr[drop:drop + keep]
            self._offs[:keep] -= byte_from
            self._buf[:self._buf_end - byte_from] = self._buf[byte_from:self._buf_end]
            self._buf_end -= byte_from
            del self._pkts[:drop]
            self._base = self._lo
        slots = self._n - self._base + 1
        if slots * 4 > self._keys.shape[0] * 3:
            size = max(slots * 2, self._keys.shape[0])
            self._keys = np.resize(self._keys, size)
            self._offs = np.resize(self._offs, size)
            self._avail = np.resize(self._avail, size)
            self._ts = np.resize(self._ts, size)
        need_bytes = self._buf_end + nbytes
        if need_bytes * 4 > self._buf.shape[0] * 3:
            self._buf = np.resize(self._buf, max(need_bytes * 2, self._buf.shape[0]))

    def push(self, pkt: RawPacket | DissectedPacket) -> DuplicateVerdict | None:
        dp = pkt if isinstance(pkt, DissectedPacket) else dissect(pkt, self.link_type)
        raw = dp.raw
        self._evict(raw.timestamp)

        avail = dp.payload_end - dp.payload_start
        self._reserve(avail)
        n, base = self._n, self._base
        slot = n - base
        q_off = self._buf_end
        self._buf[q_off:q_off + avail] = np.frombuffer(raw.data, np.uint8, avail, dp.payload_start)
        self._buf_end += avail
        key = guard_key(dp)
        self._keys[slot] = key
        self._offs[slot] = q_off
        self._avail[slot] = avail
        self._ts[slot] = raw.timestamp

        stats = self.stats
        enabled, strict = self.cfg.enabled_types, self.cfg.strict_ttl
        lo = self._lo - base
        start = slot - 1
        verdict = None
        while start >= lo:
            j, scanned, rejected = kernels.scan_window(
                self._keys, self._offs, self._avail, self._buf, lo, start, key, q_off, avail, stats.mismatch_hist
            )
            stats.comparisons += int(scanned)
            stats.guard_rejections += int(rejected)
            if j < 0:
                break
            stats.payload_matches += 1
            orig = self._pkts[j]
            found = match_headers(orig, dp, enabled, strict)
            if found is not None:
                stats.matches_per_type[found] += 1
                oi = int(j) + base
                verdict = DuplicateVerdict(
                    packet_index=n,
                    original_index=oi,
                    dup_type=found,
                    packet_distance=n - oi - 1,
                    time_delta=max(0.0, raw.timestamp - orig.raw.timestamp),
                    low_confidence=dp.truncated or orig.truncated or dp.malformed,
                )
                break
            stats.header_rejections += 1
            start = int(j) - 1

        self._pkts.append(dp)
        self._n += 1
        if self._k is not None:
            self._lo = max(self._lo, self._n - self._k)
        return verdict

    def run(self, packets: Iterable[RawPacket]) -> Iterator[tuple[RawPacket, DuplicateVerdict | None]]:
        for pkt in packets:
            verdict = self.push(pkt)
            yield (pkt.raw if isinstance(pkt, DissectedPacket) else pkt), verdict


def process_stream(packets: Iterable[RawPacket], cfg: WindowConfig = WindowConfig(),
                   link_type: int = LINKTYPE_ETHERNET,
                   stats: CompareStats | None = None) -> Iterator[tuple[RawPacket, DuplicateVerdict | None]]:
    """Yield ``(packet, verdict or None)`` in input order.

    Pass ``stats`` to collect comparison counters for the run.
    """
    return WindowEngine(cfg, link_type, stats).run(packets)


def find_duplicates(packets: Iterable[RawPacket], cfg: WindowConfig = WindowConfig(),
                    link_type: int = LINKTYPE_ETHERNET,
                    stats: CompareStats | None = None) -> list[DuplicateVerdict]:
    return [v for _, v in process_stream(packets, cfg, link_type, stats) if v is not None]


@dataclass
class DistanceStats:
    count: int
    mean_time_delta: float
    max_time_delta: float
    mean_packet_distance: float
    max_packet_distance: int
    time_bin: float
    time_histogram: list = field(default_factory=list)  # (bin start seconds, count)
    distance_histogram: list = field(default_factory=list)  # (packets between, count)

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "mean_time_delta_s": self.mean_time_delta,
            "max_time_delta_s": self.max_time_delta,
            "mean_packet_distance": self.mean_packet_distance,
            "max_packet_distance": self.max_packet_distance,
            "time_bin_s": self.time_bin,
            "time_histogram": self.time_histogram,
            "distance_histogram": self.distance_histogram,
        }


def distance_stats(verdicts: Iterable[DuplicateVerdict], time_bin: float = 1e-4) -> DistanceStats:
    verdicts = list(verdicts)
    if not verdicts:
        raise EmptyInput("no verdicts to summarise")
    dt = np.array([v.time_delta for v in verdicts])
    dn = np.array([v.packet_distance for v in verdicts], np.int64)
    tbins = np.floor(dt / time_bin).astype(np.int64)
    tcount = np.bincount(tbins)
    ncount = np.bincount(dn)
    return DistanceStats(
        count=len(verdicts),
        mean_time_delta=float(dt.mean()),
        max_time_delta=float(dt.max()),
        mean_packet_distance=float(dn.mean()),
        max_packet_distance=int(dn.max()),
        time_bin=time_bin,
        time_histogram=[(round(float(b) * time_bin, 12), int(c)) for b, c in enumerate(tcount) if c],
        distance_histogram=[(int(b), int(c)) for b, c in enumerate(ncount) if c],
    )
