"""Independent reference computations used as test oracles.

Nothing here imports the code paths it checks: checksums are summed word by
word in plain Python, and the window search is a literal double loop over
``classify_pair``.
"""

import math
import struct

from spandedup.compare import CompareStats, classify_pair
from spandedup.packet import dissect
from spandedup.window import CountWindow, DuplicateVerdict


def hand_checksum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\x00"
    total = 0
    for (word,) in struct.iter_unpack("!H", data):
        total += word
    while total > 0xFFFF:
        total = (total & 0xFFFF) + (total >> 16)
    return total ^ 0xFFFF


def hand_l4_checksum(src: bytes, dst: bytes, proto: int, segment: bytes) -> int:
    """Checksum over a pseudo-header and a segment whose checksum field is zero."""
    if len(src) == 4:
        pseudo = src + dst + bytes([0, proto]) + len(segment).to_bytes(2, "big")
    else:
        pseudo = src + dst + len(segment).to_bytes(4, "big") + bytes([0, 0, 0, proto])
    value = hand_checksum(pseudo + segment)
    if proto == 17 and value == 0:
        value = 0xFFFF
    return value


def brute_force_window(packets, cfg):
    """Literal sliding-window search: compare against every packet in the window."""
    dps = [dissect(p) for p in packets]
    stats = CompareStats()
    verdicts = []
    now = -math.inf
    lo = 0
    for n, b in enumerate(dps):
        if isinstance(cfg.mode, CountWindow):
            if cfg.mode.k is not None:
                lo = max(lo, n - cfg.mode.k)
        else:
            now = max(now, b.raw.timestamp)
            while lo < n and dps[lo].raw.timestamp < now - cfg.mode.duration:
                lo += 1
        for j in range(n - 1, lo - 1, -1):
            a = dps[j]
            t = classify_pair(a, b, cfg.enabled_types, stats, cfg.strict_ttl)
            if t is not None:
                verdicts.append(DuplicateVerdict(
                    n, j, t, n - j - 1, max(0.0, b.raw.timestamp - a.raw.timestamp),
                    b.truncated or a.truncated or b.malformed,
                ))
                break
    return verdicts, stats
