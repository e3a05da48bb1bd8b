"""Random frame and duplicate generators shared by the tests."""

import numpy as np

from spandedup.compare import DuplicateType
from spandedup.packet import RawPacket, build_frame, dissect
from spandedup.sim import DuplicateProfile, mutate_for_type


def rand_bytes(rng, n):
    return rng.integers(0, 256, n, dtype=np.uint8).tobytes()


def rand_mac(rng):
    return bytes([0x02]) + rand_bytes(rng, 5)


def other_bytes(rng, old, n):
    while True:
        new = rand_bytes(rng, n)
        if new != old:
            return new


def random_frame(rng, *, transport=None, v6=None, payload_len=None, alphabet=256, vlan=None):
    """A random, well-formed Ethernet/IP frame with valid checksums."""
    v6 = bool(rng.integers(0, 2)) if v6 is None else v6
    transport = ("tcp", "udp")[rng.integers(0, 2)] if transport is None else transport
    alen = 16 if v6 else 4
    n = int(rng.integers(1, 200)) if payload_len is None else payload_len
    payload = rng.integers(0, alphabet, n, dtype=np.uint8).tobytes()
    tags = ()
    if vlan or (vlan is None and rng.random() < 0.2):
        tags = ((int(rng.integers(1, 4095)), int(rng.integers(0, 8))),)
    return build_frame(
        rand_mac(rng), rand_mac(rng), rand_bytes(rng, alen), rand_bytes(rng, alen), payload,
        transport=transport,
        src_port=int(rng.integers(1, 65536)),
        dst_port=int(rng.integers(1, 65536)),
        ttl=int(rng.integers(2, 256)),
        identification=int(rng.integers(0, 65536)),
        dscp=int(rng.integers(0, 64)),
        flow_label=int(rng.integers(0, 1 << 20)),
        seq=int(rng.integers(0, 1 << 32)),
        ack=int(rng.integers(0, 1 << 32)),
        window=int(rng.integers(0, 65536)),
        vlan_tags=tags,
    )


def random_profile(rng, dup_type, dp):
    """A profile of ``dup_type`` that changes what the type must change for ``dp``."""
    kw = {"dup_type": dup_type}
    if rng.random() < 0.3 and len(dp.vlan_tags) < 2:
        kw["vlan_tag"] = int(rng.integers(1, 4095))
        kw["vlan_pcp"] = int(rng.integers(0, 8))
    if rng.random() < 0.3:
        kw["dscp"] = int(rng.integers(0, 64))
    if dup_type is DuplicateType.SWITCHING:
        return DuplicateProfile(**kw)
    kw["router_src_mac"] = other_bytes(rng, dp.link.src_mac, 6)
    kw["router_dst_mac"] = other_bytes(rng, dp.link.dst_mac, 6)
    alen = len(dp.net.src_ip)
    side = ("src", "dst")[rng.integers(0, 2)]
    kw["nat_side"] = side
    old_ip = dp.net.src_ip if side == "src" else dp.net.dst_ip
    if dup_type is DuplicateType.NAT_ROUTING:
        kw["nat_address"] = other_bytes(rng, old_ip, alen)
        if rng.random() < 0.5:
            old_port = dp.transport.src_port if side == "src" else dp.transport.dst_port
            kw["nat_port"] = (old_port + int(rng.integers(1, 65535))) % 65536
    elif dup_type is DuplicateType.PROXYING:
        kw["proxy_field"] = ("seq", "ack")[rng.integers(0, 2)]
        kw["proxy_offset"] = int(rng.integers(1, 1 << 32))
        if rng.random() < 0.5:
            kw["proxy_address"] = other_bytes(rng, old_ip, alen)
    return DuplicateProfile(**kw)


def make_duplicate(rng, frame, dup_type, ts=0.0):
    dp = dissect(RawPacket(0, ts, frame))
    return mutate_for_type(dp, random_profile(rng, dup_type, dp)).data
