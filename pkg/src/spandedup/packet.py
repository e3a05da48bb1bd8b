"""Layered dissection of Ethernet frames and Internet checksums.

Dissection never drops a packet: anything that cannot be parsed comes back as
a ``DissectedPacket`` with ``malformed=True`` whose comparison payload is the
whole frame. Pass ``strict=True`` to get a ``MalformedFrame`` exception instead.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np

from . import kernels

LINKTYPE_ETHERNET = 1

ETH_HEADER_LEN = 14
ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_IPV6 = 0x86DD
VLAN_TPIDS = frozenset({0x8100, 0x88A8, 0x9100})
MAX_VLAN_TAGS = 2

IPPROTO_TCP = 6
IPPROTO_UDP = 17
IPV6_EXTENSION_HEADERS = frozenset({0, 43, 44, 50, 51, 60, 135, 139, 140, 253, 254})


class PacketError(ValueError):
    pass


class MalformedFrame(PacketError):
    pass


class UnsupportedLinkType(PacketError):
    pass


class OddLength(PacketError):
    pass


class LengthOutOfRange(PacketError):
    pass


class TruncatedPayload(PacketError):
    pass


class ProtocolClass(enum.IntEnum):
    TCP = 0
    UDP = 1
    OTHER_IP = 2
    NON_IP = 3


@dataclass(frozen=True, slots=True)
class RawPacket:
    """One captured frame as read from a trace."""

    index: int
    timestamp: float
    data: bytes
    original_len: int = -1

    def __post_init__(self):
        if self.original_len < 0:
            object.__setattr__(self, "original_len", len(self.data))
        elif self.original_len < len(self.data):
            raise ValueError(
                f"original_len {self.original_len} < captured_len {len(self.data)}"
            )

    @property
    def captured_len(self) -> int:
        return len(self.data)

    @property
    def truncated(self) -> bool:
        return len(self.data) < self.original_len


@dataclass(frozen=True, slots=True)
class VlanTag:
    tpid: int
    pcp: int
    dei: int
    vid: int


@dataclass(frozen=True, slots=True)
class EthernetView:
    dst_mac: bytes
    src_mac: bytes
    ethertype: int  # after any VLAN tags
    header_len: int  # 14 + 4 per tag


@dataclass(frozen=True, slots=True)
class IPv4View:
    offset: int
    header_len: int
    dscp: int
    ecn: int
    total_len: int
    identification: int
    flags_fragment: int
    ttl: int
    protocol: int
    header_checksum: int
    src_ip: bytes
    dst_ip: bytes
    options: bytes

    version = 4

    @property
    def fragment_offset(self) -> int:
        return self.flags_fragment & 0x1FFF

    @property
    def hop_limit(self) -> int:
        return self.ttl


@dataclass(frozen=True, slots=True)
class IPv6View:
    offset: int
    traffic_class: int
    flow_label: int
    payload_len: int
    next_header: int
    hop_limit: int
    src_ip: bytes
    dst_ip: bytes

    version = 6
    header_len = 40

    @property
    def ttl(self) -> int:
        return self.hop_limit


@dataclass(frozen=True, slots=True)
class TCPView:
    offset: int
    src_port: int
    dst_port: int
    seq: int
    ack: int
    data_offset: int
    flags: int  # 9 bits, NS..FIN
    window: int
    checksum: int
    urgent: int
    options: bytes

    header_len = property(lambda self: self.data_offset)


@dataclass(frozen=True, slots=True)
class UDPView:
    offset: int
    src_port: int
    dst_port: int
    length: int
    checksum: int

    header_len = 8


@dataclass(frozen=True, slots=True)
class DissectedPacket:
    raw: RawPacket
    link: EthernetView | None
    vlan_tags: tuple[VlanTag, ...]
    net: IPv4View | IPv6View | None
    transport: TCPView | UDPView | None
    protocol_class: ProtocolClass
    payload_start: int
    payload_end: int  # clipped to captured bytes
    payload_len: int  # declared length; differs from the span when truncated
    truncated: bool = False
    malformed: bool = False
    reason: str = ""

    @property
    def payload_span(self) -> tuple[int, int]:
        return self.payload_start, self.payload_end

    @property
    def payload(self) -> bytes:
        return self.raw.data[self.payload_start:self.payload_end]

    @property
    def available_payload(self) -> int:
        return self.payload_end - self.payload_start

    @property
    def is_ip(self) -> bool:
        return self.net is not None


def _unparsed(pkt: RawPacket, reason: str, strict: bool, link=None, tags=()) -> DissectedPacket:
    if strict:
        raise MalformedFrame(reason)
    n = len(pkt.data)
    return DissectedPacket(
        raw=pkt,
        link=link,
        vlan_tags=tuple(tags),
        net=None,
        transport=None,
        protocol_class=ProtocolClass.NON_IP,
        payload_start=0,
        payload_end=n,
        payload_len=n,
        truncated=pkt.truncated,
        malformed=True,
        reason=reason,
    )


def dissect(pkt: RawPacket, link_type: int = LINKTYPE_ETHERNET, *, strict: bool = False) -> DissectedPacket:
    """Split a frame into header views and locate its comparison payload.

    The payload is the TCP/UDP payload when there is one, otherwise the IP
    payload, otherwise the Ethernet payload.
    """
    if link_type != LINKTYPE_ETHERNET:
        raise UnsupportedLinkType(f"link type {link_type} is not Ethernet")
    data = pkt.data
    n = len(data)
    if n < ETH_HEADER_LEN:
        return _unparsed(pkt, "frame shorter than Ethernet header", strict)

    ethertype = (data[12] << 8) | data[13]
    off = ETH_HEADER_LEN
    tags = []
    while ethertype in VLAN_TPIDS and len(tags) < MAX_VLAN_TAGS:
        if n < off + 4:
            return _unparsed(pkt, "truncated 802.1Q tag", strict)
        tci, inner = struct.unpack_from("!HH", data, off)
        tags.append(VlanTag(ethertype, tci >> 13, (tci >> 12) & 1, tci & 0x0FFF))
        ethertype = inner
        off += 4
    link = EthernetView(data[0:6], data[6:12], ethertype, off)

    if ethertype == ETHERTYPE_IPV4:
        return _dissect_ipv4(pkt, link, tags, strict)
    if ethertype == ETHERTYPE_IPV6:
        return _dissect_ipv6(pkt, link, tags, strict)
    return DissectedPacket(
        raw=pkt,
        link=link,
        vlan_tags=tuple(tags),
        net=None,
        transport=None,
        protocol_class=ProtocolClass.NON_IP,
        payload_start=off,
        payload_end=n,
        payload_len=pkt.original_len - off,
        truncated=pkt.truncated,
    )


def _dissect_ipv4(pkt, link, tags, strict):
    data = pkt.data
    n = len(data)
    off = link.header_len
    if n < off + 20:
        return _unparsed(pkt, "truncated IPv4 header", strict, link, tags)
    vihl, tos, total_len, ident, flags_frag, ttl, proto, csum = struct.unpack_from("!BBHHHBBH", data, off)
    hl = (vihl & 0x0F) * 4
    if vihl >> 4 != 4 or hl < 20 or total_len < hl:
        return _unparsed(pkt, "bad IPv4 version or lengths", strict, link, tags)
    if off + total_len > pkt.original_len:
        return _unparsed(pkt, "IPv4 total length exceeds frame", strict, link, tags)
    if n < off + hl:
        return _unparsed(pkt, "truncated IPv4 options", strict, link, tags)
    ip = IPv4View(
        offset=off,
        header_len=hl,
        dscp=tos >> 2,
        ecn=tos & 0x03,
        total_len=total_len,
        identification=ident,
        flags_fragment=flags_frag,
        ttl=ttl,
        protocol=proto,
        header_checksum=csum,
        src_ip=data[off + 12:off + 16],
        dst_ip=data[off + 16:off + 20],
        options=data[off + 20:off + hl],
    )
    first_fragment = (flags_frag & 0x1FFF) == 0
    return _dissect_l4(pkt, link, tags, ip, off + hl, off + total_len, proto if first_fragment else -1, strict)


def _dissect_ipv6(pkt, link, tags, strict):
    data = pkt.data
    n = len(data)
    off = link.header_len
    if n < off + 40:
        return _unparsed(pkt, "truncated IPv6 header", strict, link, tags)
    vtf, plen, nh, hlim = struct.unpack_from("!IHBB", data, off)
    if vtf >> 28 != 6:
        return _unparsed(pkt, "bad IPv6 version", strict, link, tags)
    if off + 40 + plen > pkt.original_len:
        return _unparsed(pkt, "IPv6 payload length exceeds frame", strict, link, tags)
    ip = IPv6View(
        offset=off,
        traffic_class=(vtf >> 20) & 0xFF,
        flow_label=vtf & 0xFFFFF,
        payload_len=plen,
        next_header=nh,
        hop_limit=hlim,
        src_ip=data[off + 8:off + 24],
        dst_ip=data[off + 24:off + 40],
    )
    # extension headers are not walked; the packet is compared at IP-payload level
    return _dissect_l4(pkt, link, tags, ip, off + 40, off + 40 + plen, nh, strict)


def _dissect_l4(pkt, link, tags, ip, l4, end_decl, proto, strict):
    data = pkt.data
    n = len(data)
    end = min(end_decl, n)
    truncated = pkt.truncated or end_decl > n
    seg_len = end_decl - l4

    def other_ip():
        return DissectedPacket(pkt, link, tuple(tags), ip, None, ProtocolClass.OTHER_IP,
                               l4, max(l4, end), seg_len, truncated)

    if proto == IPPROTO_TCP:
        if seg_len < 20:
            return _unparsed(pkt, "TCP segment shorter than header", strict, link, tags)
        if end < l4 + 20:
            return other_ip()
        sport, dport, seq, ack, off_flags, window, csum, urg = struct.unpack_from("!HHIIHHHH", data, l4)
        doff = (off_flags >> 12) * 4
        if doff < 20 or doff > seg_len:
            return _unparsed(pkt, "bad TCP data offset", strict, link, tags)
        if end < l4 + doff:
            return other_ip()
        tcp = TCPView(l4, sport, dport, seq, ack, doff, off_flags & 0x01FF, window, csum, urg,
                      data[l4 + 20:l4 + doff])
        return DissectedPacket(pkt, link, tuple(tags), ip, tcp, ProtocolClass.TCP,
                               l4 + doff, end, seg_len - doff, truncated)
    if proto == IPPROTO_UDP:
        if seg_len < 8:
            return _unparsed(pkt, "UDP datagram shorter than header", strict, link, tags)
        if end < l4 + 8:
            return other_ip()
        sport, dport, ulen, csum = struct.unpack_from("!HHHH", data, l4)
        if ulen < 8 or ulen > seg_len:
            return _unparsed(pkt, "bad UDP length", strict, link, tags)
        udp = UDPView(l4, sport, dport, ulen, csum)
        return DissectedPacket(pkt, link, tuple(tags), ip, udp, ProtocolClass.UDP,
                               l4 + 8, min(l4 + ulen, n), ulen - 8, pkt.truncated or l4 + ulen > n)
    return other_ip()


# -- checksums ---------------------------------------------------------------

def ones_complement_sum(data: bytes) -> int:
    """16-bit one's-complement sum of ``data`` (odd length is zero padded)."""
    return int(kernels.ones_complement_sum(np.frombuffer(data, np.uint8)))


def internet_checksum(data: bytes) -> int:
    return ~ones_complement_sum(data) & 0xFFFF


def compute_ipv4_checksum(header: bytes) -> int:
    """Checksum for an IPv4 header whose checksum field is already zeroed."""
    if len(header) % 2:
        raise OddLength(f"IPv4 header length {len(header)} is odd")
    if not 20 <= len(header) <= 60:
        raise LengthOutOfRange(f"IPv4 header length {len(header)} outside [20, 60]")
    return internet_checksum(header)


def ipv4_header_checksum(pkt: DissectedPacket) -> int:
    ip = pkt.net
    if not isinstance(ip, IPv4View):
        raise PacketError("not an IPv4 packet")
    header = bytearray(pkt.raw.data[ip.offset:ip.offset + ip.header_len])
    header[10:12] = b"\x00\x00"
    return compute_ipv4_checksum(bytes(header))


def verify_ipv4(pkt: DissectedPacket) -> bool:
    ip = pkt.net
    return ones_complement_sum(pkt.raw.data[ip.offset:ip.offset + ip.header_len]) == 0xFFFF


def _l4_segment(pkt: DissectedPacket) -> tuple[bytes, bytes]:
    if pkt.protocol_class not in (ProtocolClass.TCP, ProtocolClass.UDP):
        raise PacketError("L4 checksum needs a TCP or UDP packet")
    ip, l4 = pkt.net, pkt.transport
    if isinstance(l4, UDPView):
        seg_len = l4.length
    else:
        seg_len = pkt.payload_len + l4.data_offset
    if pkt.truncated or l4.offset + seg_len > len(pkt.raw.data):
        raise TruncatedPayload("segment not fully captured")
    proto = IPPROTO_TCP if isinstance(l4, TCPView) else IPPROTO_UDP
    if ip.version == 4:
        pseudo = ip.src_ip + ip.dst_ip + struct.pack("!BBH", 0, proto, seg_len)
    else:
        pseudo = ip.src_ip + ip.dst_ip + struct.pack("!I3xB", seg_len, proto)
    return pseudo, pkt.raw.data[l4.offset:l4.offset + seg_len]


def compute_l4_checksum(pkt: DissectedPacket) -> int:
    """TCP/UDP checksum over pseudo-header, header (checksum zeroed) and payload."""
    pseudo, seg = _l4_segment(pkt)
    at = 16 if isinstance(pkt.transport, TCPView) else 6
    seg = seg[:at] + b"\x00\x00" + seg[at + 2:]
    csum = internet_checksum(pseudo + seg)
    if csum == 0 and isinstance(pkt.transport, UDPView):
        return 0xFFFF
    return csum


def verify_l4(pkt: DissectedPacket) -> bool:
    if isinstance(pkt.transport, UDPView) and pkt.transport.checksum == 0 and pkt.net.version == 4:
        return True  # checksum not in use
    pseudo, seg = _l4_segment(pkt)
    return ones_complement_sum(pseudo + seg) == 0xFFFF


# -- construction ------------------------------------------------------------

def build_frame(
    src_mac: bytes,
    dst_mac: bytes,
    src_ip: bytes,
    dst_ip: bytes,
    payload: bytes = b"",
    *,
    transport: str | int = "udp",
    src_port: int = 0,
    dst_port: int = 0,
    ttl: int = 64,
    identification: int = 0,
    flags_fragment: int = 0x4000,
    dscp: int = 0,
    ecn: int = 0,
    flow_label: int = 0,
    ip_options: bytes = b"",
    seq: int = 0,
    ack: int = 0,
    tcp_flags: int = 0x018,
    window: int = 65535,
    urgent: int = 0,
    tcp_options: bytes = b"",
    vlan_tags: tuple[tuple[int, int], ...] = (),
) -> bytes:
    """Assemble an Ethernet/IP[/TCP|UDP] frame with valid checksums.

    IPv6 is used when the addresses are 16 bytes long. ``transport`` may be
    "tcp", "udp" or a raw IP protocol number for anything else. ``vlan_tags``
    holds ``(vid, pcp)`` pairs, outermost first.
    """
    proto = {"tcp": IPPROTO_TCP, "udp": IPPROTO_UDP}.get(transport, transport)
    if proto == IPPROTO_TCP:
        if len(tcp_options) % 4:
            raise ValueError("TCP options must be padded to 4 bytes")
        doff = 20 + len(tcp_options)
        l4 = struct.pack("!HHIIHHHH", src_port, dst_port, seq & 0xFFFFFFFF, ack & 0xFFFFFFFF,
                         (doff // 4) << 12 | (tcp_flags & 0x01FF), window, 0, urgent) + tcp_options
        csum_at = 16
    elif proto == IPPROTO_UDP:
        l4 = struct.pack("!HHHH", src_port, dst_port, 8 + len(payload), 0)
        csum_at = 6
    else:
        l4 = b""
        csum_at = None
    segment = l4 + payload
    v6 = len(src_ip) == 16

    if csum_at is not None:
        if v6:
            pseudo = src_ip + dst_ip + struct.pack("!I3xB", len(segment), proto)
        else:
            pseudo = src_ip + dst_ip + struct.pack("!BBH", 0, proto, len(segment))
        csum = internet_checksum(pseudo + segment)
        if csum == 0 and proto == IPPROTO_UDP:
            csum = 0xFFFF
        segment = segment[:csum_at] + struct.pack("!H", csum) + segment[csum_at + 2:]

    if v6:
        vtf = 6 << 28 | ((dscp << 2 | ecn) & 0xFF) << 20 | (flow_label & 0xFFFFF)
        net = struct.pack("!IHBB", vtf, len(segment), proto, ttl) + src_ip + dst_ip
        ethertype = ETHERTYPE_IPV6
    else:
        if len(ip_options) % 4:
            raise ValueError("IP options must be padded to 4 bytes")
        hl = 20 + len(ip_options)
        header = bytearray(struct.pack("!BBHHHBBH", 0x40 | hl // 4, (dscp << 2 | ecn) & 0xFF,
                                       hl + len(segment), identification, flags_fragment,
                                       ttl, proto, 0) + src_ip + dst_ip + ip_options)
        header[10:12] = struct.pack("!H", compute_ipv4_checksum(bytes(header)))
        net = bytes(header)
        ethertype = ETHERTYPE_IPV4

    l2 = dst_mac + src_mac
    for vid, pcp in vlan_tags:
        l2 += struct.pack("!HH", 0x8100, (pcp & 7) << 13 | (vid & 0x0FFF))
    return l2 + struct.pack("!H", ethertype) + net + segment
