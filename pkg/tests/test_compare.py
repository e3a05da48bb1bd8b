import itertools

import numpy as np
import pytest

from helpers import make_duplicate, random_frame
from spandedup.compare import (
    ALL_TYPES,
    PRECEDENCE,
    CompareStats,
    DuplicateType,
    classify_pair,
    guard,
    match_headers,
    payload_equal,
)
from spandedup.packet import RawPacket, build_frame, dissect
from spandedup.sim import DuplicateProfile, mutate_for_type

S, R, N, P = PRECEDENCE


def d(data, ts=0.0, index=0):
    return dissect(RawPacket(index, ts, data))


MAC1, MAC2 = bytes.fromhex("020000000001"), bytes.fromhex("020000000002")
IP1, IP2 = bytes([10, 0, 0, 1]), bytes([10, 0, 0, 2])


def tcp(payload=b"abcdef", **kw):
    base = dict(transport="tcp", src_port=1000, dst_port=80, seq=100, ack=200)
    base.update(kw)
    return build_frame(MAC1, MAC2, IP1, IP2, payload, **base)


def test_parse_type():
    assert DuplicateType.parse(" NAT ") is N
    with pytest.raises(ValueError, match="switching, routing, nat, proxy"):
        DuplicateType.parse("bridge")


def test_identical_frames_are_switching():
    a = d(tcp())
    assert classify_pair(a, d(tcp())) is S


def test_vlan_and_dscp_only_is_switching():
    a = d(tcp())
    b = d(tcp(vlan_tags=((7, 3),), dscp=46))
    assert classify_pair(a, b) is S


def test_guard_rejects_class_and_length():
    a = d(tcp(b"abcdef"))
    assert not guard(a, d(tcp(b"abcdefg")))
    udp = d(build_frame(MAC1, MAC2, IP1, IP2, b"abcdef", transport="udp"))
    assert not guard(a, udp)
    stats = CompareStats()
    assert classify_pair(a, udp, stats=stats) is None
    assert stats.guard_rejections == 1 and stats.comparisons == 1


def test_payload_mismatch_position_recorded():
    a = d(tcp(b"abcdef"))
    b = d(tcp(b"abXdef"))
    assert payload_equal(a, b) == (False, 3)
    stats = CompareStats()
    assert classify_pair(a, b, stats=stats) is None
    assert stats.mismatch_hist[3] == 1
    assert stats.is_consistent()


def test_routing_example():
    a = d(tcp(ttl=64))
    b = d(build_frame(b"\x02" * 6, b"\x04" * 6, IP1, IP2, b"abcdef", transport="tcp", src_port=1000,
                      dst_port=80, seq=100, ack=200, ttl=63))
    assert classify_pair(a, b) is R


def test_one_mac_changed_is_not_a_duplicate():
    a = d(tcp())
    b = d(build_frame(MAC1, b"\x04" * 6, IP1, IP2, b"abcdef", transport="tcp", src_port=1000,
                      dst_port=80, seq=100, ack=200, ttl=63))
    assert classify_pair(a, b) is None


def test_strict_ttl():
    a = d(tcp(ttl=64))
    b_same_ttl = d(build_frame(b"\x02" * 6, b"\x04" * 6, IP1, IP2, b"abcdef", transport="tcp", src_port=1000,
                               dst_port=80, seq=100, ack=200, ttl=64))
    assert classify_pair(a, b_same_ttl) is R
    assert classify_pair(a, b_same_ttl, strict_ttl=True) is None


def test_nat_two_addresses_changed_rejected():
    a = d(tcp())
    b = d(build_frame(b"\x02" * 6, b"\x04" * 6, b"\x01" * 4, b"\x03" * 4, b"abcdef", transport="tcp",
                      src_port=1000, dst_port=80, seq=100, ack=200, ttl=63))
    assert classify_pair(a, b) is None


def test_proxy_both_seq_and_ack_rejected():
    a = d(tcp())
    b = d(build_frame(b"\x02" * 6, b"\x04" * 6, IP1, IP2, b"abcdef", transport="tcp", src_port=1000,
                      dst_port=80, seq=101, ack=201))
    assert classify_pair(a, b) is None


def test_disabled_type_is_skipped():
    a = d(tcp())
    b = d(tcp())
    assert classify_pair(a, b, enabled=frozenset({R})) is None
    assert match_headers(a, b, frozenset({S})) is S


def test_malformed_pairs_only_match_byte_identical():
    junk = b"\x00" * 20
    assert classify_pair(d(junk), d(junk)) is S
    assert classify_pair(d(junk), d(b"\x00" * 19 + b"\x01")) is None


@pytest.mark.parametrize("dup_type", PRECEDENCE)
def test_each_profile_classifies_as_its_type(dup_type, rng):
    for _ in range(200):
        transport = "tcp" if dup_type is P else None
        frame = random_frame(rng, transport=transport)
        dup = make_duplicate(rng, frame, dup_type)
        assert classify_pair(d(frame), d(dup)) is dup_type
        # with every other type disabled the rules still pick it out
        assert classify_pair(d(frame), d(dup), enabled=frozenset({dup_type})) is dup_type


@pytest.mark.parametrize("dup_type", PRECEDENCE)
def test_exclusivity(dup_type, rng):
    """No other type's rule accepts a pair produced by one profile."""
    for _ in range(200):
        frame = random_frame(rng, transport="tcp" if dup_type is P else None)
        a, b = d(frame), d(make_duplicate(rng, frame, dup_type))
        others = ALL_TYPES - {dup_type}
        assert match_headers(a, b, others) is None


def test_payload_mutation_kills_every_type(rng):
    for dup_type in PRECEDENCE:
        for _ in range(50):
            frame = random_frame(rng, transport="tcp" if dup_type is P else None)
            dup = bytearray(make_duplicate(rng, frame, dup_type))
            dup[-1 - int(rng.integers(0, 1))] ^= 0x01
            assert classify_pair(d(frame), d(bytes(dup))) is None


def test_stats_merge_and_survival():
    a = CompareStats()
    b = CompareStats()
    a.comparisons, a.guard_rejections = 3, 1
    a.mismatch_hist[1] = 2
    b.comparisons, b.payload_matches = 1, 1
    b.matches_per_type[S] = 1
    m = a + b
    assert m.comparisons == 4 and m.matches == 1 and m.is_consistent()
    assert m.histogram_pairs() == [(1, 2)]
    np.testing.assert_allclose(m.survival(), [0.75, 0.25])
    np.testing.assert_allclose(m.survival(guard_passing_only=True), [1.0, 1 / 3])


def test_classify_is_pure_and_symmetric_for_switching(rng):
    for _ in range(50):
        f = random_frame(rng)
        g = make_duplicate(rng, f, S)
        assert classify_pair(d(f), d(g)) is classify_pair(d(g), d(f)) is S


def test_proxy_rule_ignores_ttl_in_strict_mode(rng):
    frame = random_frame(rng, transport="tcp", v6=False)
    a = d(frame)
    dup = mutate_for_type(a, DuplicateProfile(P, proxy_offset=5))
    assert classify_pair(a, d(dup.data), strict_ttl=True) is P


def test_all_pairs_of_unrelated_frames_rejected(rng):
    frames = [d(random_frame(rng, payload_len=4, alphabet=2)) for _ in range(40)]
    for a, b in itertools.combinations(frames, 2):
        if a.raw.data != b.raw.data:
            t = classify_pair(a, b)
            assert t is None or a.payload == b.payload
