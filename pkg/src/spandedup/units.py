"""Parsing of human-friendly durations, rates and sizes into SI values."""

import re

_NUM = r"([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)"

_DURATION = {"": 1.0, "s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9}
_RATE = {"": 1.0, "bps": 1.0, "kbps": 1e3, "mbps": 1e6, "gbps": 1e9, "tbps": 1e12}
_SIZE = {"": 1, "b": 1, "kb": 1000, "kib": 1024}


def _parse(text: str, table: dict, what: str) -> float:
    m = re.fullmatch(_NUM + r"\s*([a-zA-Zµ/]*)", text.strip())
    if not m:
        raise ValueError(f"cannot parse {what} {text!r}")
    unit = m.group(2).lower().replace("/s", "ps").replace("bit", "b")
    if unit not in table:
        raise ValueError(f"unknown {what} unit {m.group(2)!r} in {text!r}")
    return float(m.group(1)) * table[unit]


def parse_duration(text: str) -> float:
    """'15ms' -> 0.015. A bare number is seconds."""
    return _parse(text, _DURATION, "duration")


def parse_rate(text: str) -> float:
    """'100Mbps' -> 1e8 bits/second. A bare number is bits/second."""
    return _parse(text, _RATE, "rate")


def parse_size(text: str) -> int:
    """'1538' or '1538B' -> 1538 bytes."""
    value = _parse(text, _SIZE, "size")
    if value != int(value):
        raise ValueError(f"size {text!r} is not a whole number of bytes")
    return int(value)


def fmt_duration(seconds: float) -> str:
    if seconds >= 1:
        return f"{seconds:.6g} s"
    if seconds >= 1e-3:
        return f"{seconds * 1e3:.6g} ms"
    if seconds >= 1e-6:
        return f"{seconds * 1e6:.6g} us"
    return f"{seconds * 1e9:.6g} ns"
