"""Ground-truth simulator of a switch with mirrored ports.

Model: Main and Auxiliary streams share one FIFO output port with
deterministic service (on-wire length / link capacity) and a bounded number
of packets in the system. The mirror port sees

* the ingress copy of every Main and Interfering arrival, at arrival time;
* the egress copy of every Main and Auxiliary departure, at service completion.

Main egress copies are rewritten according to a ``DuplicateProfile``, so each
delivered Main packet yields one labelled duplicate pair. The timing core
(``simulate_timing``) never builds frames and is cheap enough for long sweeps;
``simulate`` adds the bytes.
"""

from __future__ import annotations

import enum
import json
import math
import struct
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .compare import DuplicateType
from .dimensioning import service_time
from .packet import (
    MAX_VLAN_TAGS,
    DissectedPacket,
    IPv4View,
    RawPacket,
    TCPView,
    UDPView,
    build_frame,
    compute_ipv4_checksum,
    compute_l4_checksum,
    dissect,
)
from .pcapio import write_capture

ON_WIRE_OVERHEAD = 24  # preamble+SFD 8, FCS 4, IFG 12; none of it is captured
MIN_ON_WIRE = 64 + 20
MAX_ON_WIRE = 1518 + 20

TESTBED_STREAM_RATE = 3722.0  # pps per stream, rho ~ 0.916 on 100 Mb/s
TESTBED_FRAME = 1538  # on-wire octets
INTERFERING_FRAME = 84
SWEEP_RATES = (5000.0, 25000.0, 45000.0, 65000.0, 85000.0, 105000.0, 125000.0)


class ConfigInvalid(ValueError):
    pass


class IncompatibleProfile(ValueError):
    pass


class TTLExpiredWarning(UserWarning):
    pass


class StreamRole(enum.Enum):
    MAIN = "main"
    AUXILIARY = "auxiliary"
    INTERFERING = "interfering"


def mac(text: str) -> bytes:
    return bytes.fromhex(text.replace(":", ""))


def ip(text: str) -> bytes:
    import ipaddress

    return ipaddress.ip_address(text).packed


@dataclass(frozen=True)
class FrameTemplate:
    src_mac: bytes
    dst_mac: bytes
    src_ip: bytes
    dst_ip: bytes
    transport: str = "udp"
    src_port: int = 40000
    dst_port: int = 9000
    ttl: int = 64
    dscp: int = 0

    @property
    def header_len(self) -> int:
        return 14 + (40 if len(self.src_ip) == 16 else 20) + (20 if self.transport == "tcp" else 8)


@dataclass(frozen=True)
class StreamSpec:
    role: StreamRole
    rate: float  # packets per second
    packet_len: int  # on-wire octets including preamble, FCS and inter-frame gap
    template: FrameTemplate

    @property
    def frame_len(self) -> int:
        return self.packet_len - ON_WIRE_OVERHEAD

    @property
    def payload_len(self) -> int:
        return self.frame_len - self.template.header_len

    def validate(self):
        if not self.rate > 0:
            raise ConfigInvalid(f"{self.role.value} stream rate must be > 0")
        if not MIN_ON_WIRE <= self.packet_len <= MAX_ON_WIRE:
            raise ConfigInvalid(f"packet_len {self.packet_len} outside [{MIN_ON_WIRE}, {MAX_ON_WIRE}]")
        if self.payload_len < 1:
            raise ConfigInvalid(f"{self.role.value} stream leaves no room for a payload")
        if self.template.transport not in ("udp", "tcp"):
            raise ConfigInvalid(f"unknown transport {self.template.transport!r}")
        if len(self.template.src_ip) != len(self.template.dst_ip):
            raise ConfigInvalid("template mixes IPv4 and IPv6 addresses")


@dataclass(frozen=True)
class DuplicateProfile:
    """How the device rewrites the egress copy of a Main packet."""

    dup_type: DuplicateType = DuplicateType.SWITCHING
    router_src_mac: bytes = mac("02:00:00:00:fe:01")
    router_dst_mac: bytes = mac("02:00:00:00:fe:02")
    nat_address: bytes = ip("203.0.113.7")
    nat_side: str = "src"  # which address (and port) the translation touches
    nat_port: int | None = None
    proxy_field: str = "seq"
    proxy_offset: int = 0x01000000
    proxy_address: bytes | None = None
    vlan_tag: int | None = None  # add an 802.1Q tag with this VID
    vlan_pcp: int = 0
    dscp: int | None = None  # remark to this DSCP


@dataclass(frozen=True)
class SimConfig:
    streams: tuple[StreamSpec, ...]
    link_capacity: float = 100e6
    output_queue_cap: int = 40  # packets in the port, including the one in service
    switching_time: float = 0.0
    profile: DuplicateProfile = DuplicateProfile()
    seed: int = 0
    duration: float = 1.0
    mirror_capacity: float | None = None  # None: ideal mirror port
    start_time: float = 0.0

    @property
    def main(self) -> StreamSpec:
        return next(s for s in self.streams if s.role is StreamRole.MAIN)

    @property
    def max_service_time(self) -> float:
        return max(
            service_time(s.packet_len * 8, self.link_capacity)
            for s in self.streams
            if s.role is not StreamRole.INTERFERING
        )

    def validate(self):
        mains = [s for s in self.streams if s.role is StreamRole.MAIN]
        if len(mains) != 1:
            raise ConfigInvalid(f"need exactly one Main stream, got {len(mains)}")
        for s in self.streams:
            s.validate()
        if self.output_queue_cap < 1:
            raise ConfigInvalid("output_queue_cap must be >= 1")
        if not self.link_capacity > 0:
            raise ConfigInvalid("link_capacity must be > 0")
        if self.mirror_capacity is not None and not self.mirror_capacity > 0:
            raise ConfigInvalid("mirror_capacity must be > 0")
        if self.switching_time < 0 or self.duration < 0:
            raise ConfigInvalid("switching_time and duration must be >= 0")
        p, tmpl = self.profile, mains[0].template
        if p.dup_type is DuplicateType.PROXYING and tmpl.transport != "tcp":
            raise ConfigInvalid("the proxy profile needs a TCP Main stream")
        if p.dup_type is DuplicateType.NAT_ROUTING and len(p.nat_address) != len(tmpl.src_ip):
            raise ConfigInvalid("NAT address family differs from the Main stream")
        if p.dup_type is not DuplicateType.SWITCHING and (
            p.router_src_mac == tmpl.src_mac or p.router_dst_mac == tmpl.dst_mac
        ):
            raise ConfigInvalid("router MACs must differ from the Main stream MACs")


def exponential_arrivals(rate: float, duration: float, seed=None) -> np.ndarray:
    """Poisson arrival times in [0, duration) with mean interarrival 1/rate."""
    if not rate > 0:
        raise ValueError("rate must be > 0")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if duration <= 0:
        return np.empty(0)
    expected = rate * duration
    chunk = int(expected + 6.0 * math.sqrt(expected) + 16)
    times = np.cumsum(rng.exponential(1.0 / rate, chunk))
    while times[-1] < duration:
        more = np.cumsum(rng.exponential(1.0 / rate, chunk)) + times[-1]
        times = np.concatenate([times, more])
    return times[: np.searchsorted(times, duration, side="left")]


@dataclass
class MirrorSchedule:
    """Timing of everything the mirror port captures, in capture order."""

    times: np.ndarray
    stream: np.ndarray  # index into SimConfig.streams
    seq: np.ndarray  # packet number within its stream
    egress: np.ndarray  # True for egress copies
    orig_index: np.ndarray  # per delivered Main packet: mirror index of the ingress copy
    dup_index: np.ndarray  # ... and of its egress copy
    queueing: np.ndarray  # w: enqueue to service completion
    switching_time: float
    arrivals: list  # per stream arrival counts
    dropped: list  # per stream queue drops

    @property
    def separations(self) -> np.ndarray:
        return self.times[self.dup_index] - self.times[self.orig_index]

    @property
    def packets_between(self) -> np.ndarray:
        return self.dup_index - self.orig_index - 1

    def __len__(self):
        return self.times.shape[0]


def _stream_seeds(seed: int, n: int):
    # two children per stream: arrivals, payload bytes
    children = np.random.SeedSequence(seed).spawn(2 * n)
    return children[0::2], children[1::2]


def simulate_timing(cfg: SimConfig) -> MirrorSchedule:
    cfg.validate()
    streams = cfg.streams
    arrival_seeds, _ = _stream_seeds(cfg.seed, len(streams))
    arrivals = [
        cfg.start_time + exponential_arrivals(s.rate, cfg.duration, np.random.default_rng(arrival_seeds[i]))
        for i, s in enumerate(streams)
    ]

    queued = [i for i, s in enumerate(streams) if s.role is not StreamRole.INTERFERING]
    enq = np.concatenate([arrivals[i] + cfg.switching_time for i in queued])
    svc = np.concatenate(
        [np.full(arrivals[i].shape[0], service_time(streams[i].packet_len * 8, cfg.link_capacity)) for i in queued]
    )
    order = np.argsort(enq, kind="stable")
    dep = np.empty_like(enq)
    dep[order] = kernels.fifo_queue(enq[order], svc[order], cfg.output_queue_cap)
    departures = {}
    pos = 0
    for i in queued:
        k = arrivals[i].shape[0]
        departures[i] = dep[pos:pos + k]
        pos += k

    ev_time, ev_stream, ev_seq, ev_egress = [], [], [], []
    main_idx = next(i for i, s in enumerate(streams) if s.role is StreamRole.MAIN)
    main_ingress_at = main_egress_at = 0
    count = 0

    def emit(times, i, seqs, egress):
        nonlocal count
        ev_time.append(times)
        ev_stream.append(np.full(times.shape[0], i, np.int32))
        ev_seq.append(seqs)
        ev_egress.append(np.full(times.shape[0], egress))
        count += times.shape[0]

    dropped = [0] * len(streams)
    for i, s in enumerate(streams):
        if s.role is not StreamRole.AUXILIARY:
            if i == main_idx:
                main_ingress_at = count
            emit(arrivals[i], i, np.arange(arrivals[i].shape[0]), False)
    for i in queued:
        ok = ~np.isnan(departures[i])
        dropped[i] = int((~ok).sum())
        if i == main_idx:
            main_egress_at = count
        emit(departures[i][ok], i, np.flatnonzero(ok), True)

    t = np.concatenate(ev_time) if ev_time else np.empty(0)
    order = np.lexsort((np.arange(t.shape[0]), t))
    times = t[order]
    stream = np.concatenate(ev_stream)[order] if ev_time else np.empty(0, np.int32)
    if cfg.mirror_capacity is not None and times.shape[0]:
        lengths = np.array([s.packet_len for s in streams])[stream]
        times = kernels.fifo_queue(times, lengths * 8.0 / cfg.mirror_capacity, 0)
    rank = np.empty(t.shape[0], np.int64)
    rank[order] = np.arange(t.shape[0])

    delivered = np.flatnonzero(~np.isnan(departures[main_idx]))
    orig_index = rank[main_ingress_at + delivered]
    dup_index = rank[main_egress_at + np.arange(delivered.shape[0])]
    queueing = departures[main_idx][delivered] - (arrivals[main_idx][delivered] + cfg.switching_time)
    return MirrorSchedule(
        times=times,
        stream=stream,
        seq=np.concatenate(ev_seq)[order] if ev_time else np.empty(0, np.int64),
        egress=np.concatenate(ev_egress)[order] if ev_time else np.empty(0, bool),
        orig_index=orig_index,
        dup_index=dup_index,
        queueing=queueing,
        switching_time=cfg.switching_time,
        arrivals=[a.shape[0] for a in arrivals],
        dropped=dropped,
    )


# -- mutation ------------------------------------------------------------------

def mutate_for_type(pkt: DissectedPacket, profile: DuplicateProfile) -> RawPacket:
    """Egress copy of ``pkt`` as the device described by ``profile`` would emit it.

    Applies the mandatory header changes for the profile's duplicate type plus
    the optional ones it enables, then recomputes IP and L4 checksums. The
    payload is never touched.
    """
    t = profile.dup_type
    if pkt.malformed:
        raise IncompatibleProfile("cannot rewrite a malformed frame")
    if pkt.truncated:
        raise IncompatibleProfile("checksums cannot be recomputed on a truncated capture")
    if t is not DuplicateType.SWITCHING and pkt.net is None:
        raise IncompatibleProfile(f"{t.value} profile needs an IP packet")
    if t is DuplicateType.NAT_ROUTING and pkt.transport is None:
        raise IncompatibleProfile("nat profile needs TCP or UDP")
    if t is DuplicateType.PROXYING and not isinstance(pkt.transport, TCPView):
        raise IncompatibleProfile("proxy profile needs TCP")

    data = bytearray(pkt.raw.data)
    net, l4 = pkt.net, pkt.transport
    v4 = isinstance(net, IPv4View)

    if profile.dscp is not None and net is not None:
        if v4:
            data[net.offset + 1] = (profile.dscp & 0x3F) << 2 | net.ecn
        else:
            tc = (profile.dscp & 0x3F) << 2 | (net.traffic_class & 0x03)
            struct.pack_into("!I", data, net.offset, 6 << 28 | tc << 20 | net.flow_label)

    if t is not DuplicateType.SWITCHING:
        if profile.router_src_mac == pkt.link.src_mac or profile.router_dst_mac == pkt.link.dst_mac:
            raise IncompatibleProfile("router MACs must differ from the original MACs")
        data[0:6] = profile.router_dst_mac
        data[6:12] = profile.router_src_mac
    if t in (DuplicateType.ROUTING, DuplicateType.NAT_ROUTING):
        ttl = net.ttl - 1
        if ttl <= 0:
            warnings.warn(f"egress copy of packet {pkt.raw.index} leaves with TTL 0", TTLExpiredWarning, stacklevel=2)
            ttl = 0
        data[net.offset + (8 if v4 else 7)] = ttl

    new_addr = profile.nat_address if t is DuplicateType.NAT_ROUTING else (
        profile.proxy_address if t is DuplicateType.PROXYING else None
    )
    if new_addr is not None:
        if len(new_addr) != len(net.src_ip):
            raise IncompatibleProfile("translated address family differs from the packet")
        at = net.offset + (12 if v4 else 8) + (0 if profile.nat_side == "src" else len(new_addr))
        if bytes(data[at:at + len(new_addr)]) == new_addr:
            raise IncompatibleProfile("translated address equals the original")
        data[at:at + len(new_addr)] = new_addr
    if t is DuplicateType.NAT_ROUTING and profile.nat_port is not None:
        at = l4.offset + (0 if profile.nat_side == "src" else 2)
        if struct.unpack_from("!H", data, at)[0] == profile.nat_port:
            raise IncompatibleProfile("mapped port equals the original")
        struct.pack_into("!H", data, at, profile.nat_port)
    if t is DuplicateType.PROXYING:
        if profile.proxy_offset % (1 << 32) == 0:
            raise IncompatibleProfile("proxy offset must change the field")
        at = l4.offset + (4 if profile.proxy_field == "seq" else 8)
        old = struct.unpack_from("!I", data, at)[0]
        struct.pack_into("!I", data, at, (old + profile.proxy_offset) % (1 << 32))

    if v4:
        hl = net.header_len
        data[net.offset + 10:net.offset + 12] = b"\x00\x00"
        csum = compute_ipv4_checksum(bytes(data[net.offset:net.offset + hl]))
        struct.pack_into("!H", data, net.offset + 10, csum)
    if l4 is not None and not (isinstance(l4, UDPView) and l4.checksum == 0 and v4):
        redone = dissect(RawPacket(pkt.raw.index, pkt.raw.timestamp, bytes(data)))
        at = l4.offset + (16 if isinstance(l4, TCPView) else 6)
        struct.pack_into("!H", data, at, compute_l4_checksum(redone))

    if profile.vlan_tag is not None:
        if len(pkt.vlan_tags) >= MAX_VLAN_TAGS:
            raise IncompatibleProfile("frame already carries the maximum number of VLAN tags")
        data[12:12] = struct.pack("!HH", 0x8100, (profile.vlan_pcp & 7) << 13 | (profile.vlan_tag & 0x0FFF))

    grown = len(data) - len(pkt.raw.data)
    return RawPacket(pkt.raw.index, pkt.raw.timestamp, bytes(data), pkt.raw.original_len + grown)


# -- labelled traces -------------------------------------------------------------

@dataclass(frozen=True)
class Label:
    mirror_index: int
    original_index: int
    dup_type: DuplicateType
    switching_time: float
    queueing_time: float

    def to_record(self) -> dict:
        return {
            "mirror_index": self.mirror_index,
            "original_index": self.original_index,
            "type": self.dup_type.value,
            "x_ns": round(self.switching_time * 1e9),
            "w_ns": round(self.queueing_time * 1e9),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Label":
        return cls(
            int(rec["mirror_index"]),
            int(rec["original_index"]),
            DuplicateType(rec["type"]),
            rec["x_ns"] * 1e-9,
            rec["w_ns"] * 1e-9,
        )


@dataclass
class LabeledTrace:
    packets: list[RawPacket]
    labels: list[Label]
    schedule: MirrorSchedule
    config: SimConfig

    @property
    def dropped(self) -> int:
        return sum(self.schedule.dropped)

    def label_set(self) -> set[tuple[int, int, DuplicateType]]:
        return {(lb.mirror_index, lb.original_index, lb.dup_type) for lb in self.labels}

    def write(self, pcap_path: str | Path, labels_path: str | Path | None = None) -> None:
        write_capture(pcap_path, self.packets)
        if labels_path is not None:
            write_labels(labels_path, self.labels)


def write_labels(path: str | Path, labels: Iterable[Label]) -> None:
    with open(path, "w") as fh:
        for lb in labels:
            fh.write(json.dumps(lb.to_record()) + "\n")


def read_labels(path: str | Path) -> list[Label]:
    with open(path) as fh:
        return [Label.from_record(json.loads(line)) for line in fh if line.strip()]


def _frame(spec: StreamSpec, seq: int, payload: bytes) -> bytes:
    t = spec.template
    tcp = t.transport == "tcp"
    return build_frame(
        t.src_mac, t.dst_mac, t.src_ip, t.dst_ip, payload,
        transport=t.transport,
        src_port=t.src_port,
        dst_port=t.dst_port,
        ttl=t.ttl,
        dscp=t.dscp,
        identification=seq & 0xFFFF,
        flow_label=seq & 0xFFFFF,
        seq=(0x10000000 + seq * len(payload)) if tcp else 0,
        ack=0x20000000 if tcp else 0,
    )


def simulate(cfg: SimConfig) -> LabeledTrace:
    """Run the simulation and build every mirrored frame."""
    sched = simulate_timing(cfg)
    _, payload_seeds = _stream_seeds(cfg.seed, len(cfg.streams))
    blobs = []
    for i, s in enumerate(cfg.streams):
        rng = np.random.default_rng(payload_seeds[i])
        blobs.append(rng.bytes(s.payload_len * sched.arrivals[i]))

    main_idx = next(i for i, s in enumerate(cfg.streams) if s.role is StreamRole.MAIN)
    pending: dict[int, bytes] = {}
    packets = []
    for m in range(len(sched)):
        i = int(sched.stream[m])
        q = int(sched.seq[m])
        spec = cfg.streams[i]
        if i == main_idx and q in pending:
            data = pending.pop(q)
        else:
            pl = spec.payload_len
            data = _frame(spec, q, blobs[i][q * pl:(q + 1) * pl])
            if i == main_idx:
                egress = mutate_for_type(dissect(RawPacket(m, 0.0, data)), cfg.profile)
                pending[q] = egress.data
        packets.append(RawPacket(m, float(sched.times[m]), data))

    labels = [
        Label(int(d), int(o), cfg.profile.dup_type, cfg.switching_time, float(w))
        for o, d, w in zip(sched.orig_index, sched.dup_index, sched.queueing)
    ]
    return LabeledTrace(packets, labels, sched, cfg)


# -- presets -------------------------------------------------------------------

def reference_testbed(
    interfering_pps: float = SWEEP_RATES[0],
    *,
    duration: float = 60.0,
    seed: int = 0,
    dup_type: DuplicateType = DuplicateType.SWITCHING,
    transport: str | None = None,
    **overrides,
) -> SimConfig:
    """Testbed configuration: two 3722 pps streams of 1538-octet packets on a
    100 Mb/s port with a 40-packet queue, plus minimum-size interfering traffic.
    """
    if transport is None:
        transport = "tcp" if dup_type is DuplicateType.PROXYING else "udp"
    main = FrameTemplate(mac("02:00:00:00:00:0a"), mac("02:00:00:00:00:0c"),
                         ip("10.0.0.5"), ip("198.51.100.10"), transport, 40000, 5001)
    aux = FrameTemplate(mac("02:00:00:00:00:0b"), mac("02:00:00:00:00:0d"),
                        ip("10.0.0.6"), ip("198.51.100.11"), "udp", 40001, 5002)
    interfering = FrameTemplate(mac("02:00:00:00:00:1a"), mac("02:00:00:00:00:1b"),
                                ip("10.0.1.5"), ip("10.0.2.5"), "udp", 40002, 5003)
    streams = (
        StreamSpec(StreamRole.MAIN, TESTBED_STREAM_RATE, TESTBED_FRAME, main),
        StreamSpec(StreamRole.AUXILIARY, TESTBED_STREAM_RATE, TESTBED_FRAME, aux),
        StreamSpec(StreamRole.INTERFERING, interfering_pps, INTERFERING_FRAME, interfering),
    )
    profile = overrides.pop("profile", DuplicateProfile(dup_type))
    return SimConfig(streams, profile=profile, seed=seed, duration=duration, **overrides)


def mirrored_rates(cfg: SimConfig) -> list[float]:
    """Nominal rates of every packet class that can land between two copies:
    Main and Interfering ingress copies plus Main and Auxiliary egress copies."""
    rates = []
    for s in cfg.streams:
        if s.role is not StreamRole.AUXILIARY:
            rates.append(s.rate)
        if s.role is not StreamRole.INTERFERING:
            rates.append(s.rate)
    return rates


@dataclass
class SweepPoint:
    interfering_pps: float
    pairs: int
    mean_separation: float
    max_separation: float
    mean_packets_between: float
    dropped: int


def separation_sweep(rates: Sequence[float] = SWEEP_RATES, *, duration: float = 60.0,
                     seed: int = 0, **overrides) -> list[SweepPoint]:
    """Mean copy separation (time and packets) for each interfering rate."""
    points = []
    for k, rate in enumerate(rates):
        cfg = reference_testbed(rate, duration=duration, seed=seed + k, **overrides)
        sched = simulate_timing(cfg)
        sep = sched.separations
        points.append(SweepPoint(
            interfering_pps=rate,
            pairs=int(sep.shape[0]),
            mean_separation=float(sep.mean()),
            max_separation=float(sep.max()),
            mean_packets_between=float(sched.packets_between.mean()),
            dropped=sum(sched.dropped),
        ))
    return points


def with_type(cfg: SimConfig, dup_type: DuplicateType, **profile_changes) -> SimConfig:
    return replace(cfg, profile=replace(cfg.profile, dup_type=dup_type, **profile_changes))


def config_from_dict(doc: dict, **overrides) -> SimConfig:
    """Build a SimConfig from a JSON-style document.

    Addresses are given as text ("02:00:00:00:00:0a", "10.0.0.5"); rates in
    packets/second, ``packet_len`` in on-wire octets, times in seconds.
    """
    try:
        streams = []
        for s in doc["streams"]:
            t = s["template"]
            tmpl = FrameTemplate(
                mac(t["src_mac"]), mac(t["dst_mac"]), ip(t["src_ip"]), ip(t["dst_ip"]),
                t.get("transport", "udp"), int(t.get("src_port", 40000)), int(t.get("dst_port", 9000)),
                int(t.get("ttl", 64)), int(t.get("dscp", 0)),
            )
            streams.append(StreamSpec(StreamRole(s["role"]), float(s["rate"]), int(s["packet_len"]), tmpl))
        fields = {
            k: doc[k]
            for k in ("link_capacity", "output_queue_cap", "switching_time", "seed", "duration",
                      "mirror_capacity", "start_time")
            if k in doc
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigInvalid(f"bad simulator config: {exc}") from exc
    fields.update(overrides)
    cfg = SimConfig(tuple(streams), **fields)
    cfg.validate()
    return cfg
