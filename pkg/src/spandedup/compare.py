"""Duplicate-pair predicates.

A pair is first screened by ``guard`` (same protocol class and payload
length), then by a byte-wise payload comparison, and only then are header
fields checked. Header rules per duplicate type:

=============  ==========================  =================================
type           must differ                 may differ (not compared)
=============  ==========================  =================================
switching      nothing                     VLAN tags, 802.1p, DSCP/ECN, IP cksum
routing        both MACs                   + TTL, IP options, checksums
nat            both MACs, exactly one IP   + at most one port, L4 checksum
proxy (TCP)    both MACs, one of seq/ack   + at most one IP, L4 checksum
=============  ==========================  =================================

The predicates are tried in that order and the first hit wins.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .packet import DissectedPacket, IPv4View, ProtocolClass, TCPView

HIST_BINS = 1 << 16


class DuplicateType(enum.Enum):
    SWITCHING = "switching"
    ROUTING = "routing"
    NAT_ROUTING = "nat"
    PROXYING = "proxy"

    @classmethod
    def parse(cls, text: str) -> "DuplicateType":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(
                f"unknown duplicate type {text!r}; expected one of "
                + ", ".join(t.value for t in cls)
            ) from None


PRECEDENCE = (
    DuplicateType.SWITCHING,
    DuplicateType.ROUTING,
    DuplicateType.NAT_ROUTING,
    DuplicateType.PROXYING,
)
ALL_TYPES = frozenset(DuplicateType)


def _new_hist():
    return np.zeros(HIST_BINS, np.int64)


def _new_type_counts():
    return {t: 0 for t in PRECEDENCE}


@dataclass
class CompareStats:
    """Counters for every pair comparison performed.

    ``mismatch_hist[c]`` counts guard-passing pairs whose payloads differed,
    decided after ``c`` bytes (the last bin absorbs anything longer).
    Invariants: ``comparisons == guard_rejections + mismatch_hist.sum() +
    payload_matches`` and ``payload_matches == header_rejections +
    sum(matches_per_type.values())``.
    """

    comparisons: int = 0
    guard_rejections: int = 0
    payload_matches: int = 0
    header_rejections: int = 0
    mismatch_hist: np.ndarray = field(default_factory=_new_hist)
    matches_per_type: dict = field(default_factory=_new_type_counts)

    @property
    def payload_mismatches(self) -> int:
        return int(self.mismatch_hist.sum())

    @property
    def guard_passed(self) -> int:
        return self.comparisons - self.guard_rejections

    @property
    def matches(self) -> int:
        return sum(self.matches_per_type.values())

    def is_consistent(self) -> bool:
        return (
            self.comparisons == self.guard_rejections + self.payload_mismatches + self.payload_matches
            and self.payload_matches == self.header_rejections + self.matches
        )

    def merge(self, other: "CompareStats") -> "CompareStats":
        return CompareStats(
            comparisons=self.comparisons + other.comparisons,
            guard_rejections=self.guard_rejections + other.guard_rejections,
            payload_matches=self.payload_matches + other.payload_matches,
            header_rejections=self.header_rejections + other.header_rejections,
            mismatch_hist=self.mismatch_hist + other.mismatch_hist,
            matches_per_type={t: self.matches_per_type[t] + other.matches_per_type[t] for t in PRECEDENCE},
        )

    __add__ = merge

    def histogram_pairs(self) -> list[tuple[int, int]]:
        nz = np.flatnonzero(self.mismatch_hist)
        return [(int(b), int(self.mismatch_hist[b])) for b in nz]

    def survival(self, guard_passing_only: bool = False) -> np.ndarray:
        """Probability that a pair is still undecided after ``b`` payload bytes.

        Guard rejections are decided at ``b = 0`` unless ``guard_passing_only``;
        payload-equal pairs survive the whole curve. The array runs up to the
        largest populated bin.
        """
        total = self.guard_passed if guard_passing_only else self.comparisons
        nz = np.flatnonzero(self.mismatch_hist)
        top = int(nz[-1]) if nz.size else 0
        if total == 0:
            return np.ones(top + 1)
        decided = np.cumsum(self.mismatch_hist[:top + 1]).astype(float)
        if not guard_passing_only:
            decided += self.guard_rejections
        return 1.0 - decided / total


def guard(a: DissectedPacket, b: DissectedPacket) -> bool:
    return (
        a.protocol_class == b.protocol_class
        and a.payload_len == b.payload_len
        and a.malformed == b.malformed
    )


def payload_equal(a: DissectedPacket, b: DissectedPacket) -> tuple[bool, int]:
    """Compare payloads byte by byte; returns (equal, bytes compared).

    Truncated captures are compared over the bytes both copies have.
    """
    pa = np.frombuffer(a.raw.data, np.uint8)[a.payload_start:a.payload_end]
    pb = np.frombuffer(b.raw.data, np.uint8)[b.payload_start:b.payload_end]
    compared, equal = kernels.first_mismatch(pa, pb)
    return bool(equal), int(compared)


# -- field groups ------------------------------------------------------------

def _macs_equal(a, b):
    return a.link.src_mac == b.link.src_mac and a.link.dst_mac == b.link.dst_mac


def _macs_rewritten(a, b):
    return a.link.src_mac != b.link.src_mac and a.link.dst_mac != b.link.dst_mac


def _same_ip_family(a, b):
    return a.net is not None and b.net is not None and a.net.version == b.net.version


def _ip_invariant(na, nb):
    """IP fields no forwarding device in the taxonomy touches."""
    if isinstance(na, IPv4View):
        return (
            na.identification == nb.identification
            and na.flags_fragment == nb.flags_fragment
            and na.protocol == nb.protocol
        )
    return na.flow_label == nb.flow_label and na.next_header == nb.next_header


def _ttl_ok(a, b, strict_ttl):
    return not strict_ttl or a.net.ttl - b.net.ttl == 1


def _tcp_rest(ta, tb):
    return (
        ta.flags == tb.flags
        and ta.window == tb.window
        and ta.urgent == tb.urgent
        and ta.data_offset == tb.data_offset
        and ta.options == tb.options
    )


def _transport_equal(ta, tb, *, ports=True, checksum=False):
    if ta is None or tb is None:
        return ta is None and tb is None
    if type(ta) is not type(tb):
        return False
    if ports and (ta.src_port != tb.src_port or ta.dst_port != tb.dst_port):
        return False
    if checksum and ta.checksum != tb.checksum:
        return False
    if isinstance(ta, TCPView):
        return ta.seq == tb.seq and ta.ack == tb.ack and _tcp_rest(ta, tb)
    return ta.length == tb.length


def _one_differs(x1, y1, x2, y2):
    return (x1 != y1) != (x2 != y2)


# -- predicates ----------------------------------------------------------------

def match_switching(a: DissectedPacket, b: DissectedPacket, strict_ttl: bool = False) -> bool:
    if a.malformed or b.malformed:
        return a.malformed and b.malformed and a.raw.data == b.raw.data
    if not _macs_equal(a, b) or a.link.ethertype != b.link.ethertype:
        return False
    na, nb = a.net, b.net
    if na is not None:
        if not _same_ip_family(a, b) or not _ip_invariant(na, nb):
            return False
        if na.src_ip != nb.src_ip or na.dst_ip != nb.dst_ip or na.ttl != nb.ttl:
            return False
        if isinstance(na, IPv4View):
            if na.options != nb.options or na.total_len != nb.total_len:
                return False
        elif na.payload_len != nb.payload_len:
            return False
    return _transport_equal(a.transport, b.transport, checksum=True)


def match_routing(a: DissectedPacket, b: DissectedPacket, strict_ttl: bool = False) -> bool:
    if a.malformed or b.malformed or not _same_ip_family(a, b):
        return False
    if not _macs_rewritten(a, b):
        return False
    na, nb = a.net, b.net
    if na.src_ip != nb.src_ip or na.dst_ip != nb.dst_ip or not _ip_invariant(na, nb):
        return False
    return _ttl_ok(a, b, strict_ttl) and _transport_equal(a.transport, b.transport)


def match_nat(a: DissectedPacket, b: DissectedPacket, strict_ttl: bool = False) -> bool:
    if a.protocol_class != b.protocol_class or a.protocol_class not in (ProtocolClass.TCP, ProtocolClass.UDP):
        return False
    if a.malformed or b.malformed or not _same_ip_family(a, b) or not _macs_rewritten(a, b):
        return False
    na, nb = a.net, b.net
    if not _one_differs(na.src_ip, nb.src_ip, na.dst_ip, nb.dst_ip) or not _ip_invariant(na, nb):
        return False
    ta, tb = a.transport, b.transport
    if ta.src_port != tb.src_port and ta.dst_port != tb.dst_port:
        return False
    return _ttl_ok(a, b, strict_ttl) and _transport_equal(ta, tb, ports=False)


def match_proxy(a: DissectedPacket, b: DissectedPacket, strict_ttl: bool = False) -> bool:
    # TTL is not part of the proxy rule, so strict_ttl is accepted and ignored
    if a.protocol_class != ProtocolClass.TCP or b.protocol_class != ProtocolClass.TCP:
        return False
    if a.malformed or b.malformed or not _same_ip_family(a, b) or not _macs_rewritten(a, b):
        return False
    na, nb = a.net, b.net
    if na.src_ip != nb.src_ip and na.dst_ip != nb.dst_ip:
        return False
    if not _ip_invariant(na, nb):
        return False
    ta, tb = a.transport, b.transport
    if ta.src_port != tb.src_port or ta.dst_port != tb.dst_port:
        return False
    return _one_differs(ta.seq, tb.seq, ta.ack, tb.ack) and _tcp_rest(ta, tb)


MATCHERS = {
    DuplicateType.SWITCHING: match_switching,
    DuplicateType.ROUTING: match_routing,
    DuplicateType.NAT_ROUTING: match_nat,
    DuplicateType.PROXYING: match_proxy,
}


def match_headers(a, b, enabled=ALL_TYPES, strict_ttl=False):
    """First duplicate type (in precedence order) whose header rule holds."""
    for t in PRECEDENCE:
        if t in enabled and MATCHERS[t](a, b, strict_ttl):
            return t
    return None


def classify_pair(
    a: DissectedPacket,
    b: DissectedPacket,
    enabled=ALL_TYPES,
    stats: CompareStats | None = None,
    strict_ttl: bool = False,
) -> DuplicateType | None:
    """Classify ``b`` as a duplicate of the earlier packet ``a``, or return None."""
    if stats is None:
        stats = CompareStats()
    stats.comparisons += 1
    if not guard(a, b):
        stats.guard_rejections += 1
        return None
    equal, compared = payload_equal(a, b)
    if not equal:
        stats.mismatch_hist[min(compared, HIST_BINS - 1)] += 1
        return None
    stats.payload_matches += 1
    found = match_headers(a, b, enabled, strict_ttl)
    if found is None:
        stats.header_rejections += 1
    else:
        stats.matches_per_type[found] += 1
    return found
