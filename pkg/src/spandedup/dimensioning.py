"""Window dimensioning from an M/D/1 model of the monitored output port.

All quantities are SI: seconds, bits, bits per second, packets per second.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence


class DimensioningError(ValueError):
    pass


class UtilizationOutOfRange(DimensioningError):
    pass


class ZeroCapacity(DimensioningError):
    pass


class NegativeResidual(DimensioningError):
    pass


class InvalidInputs(DimensioningError):
    pass


def _check_rho(rho: float):
    if not 0.0 <= rho < 1.0:
        raise UtilizationOutOfRange(f"utilization {rho} outside [0, 1); the queue is unstable")


def md1_queue_length(rho: float) -> float:
    """Mean number of packets waiting (excluding the one in service)."""
    _check_rho(rho)
    return rho * rho / (2.0 * (1.0 - rho))


def md1_system_time(rho: float, delta: float) -> float:
    """Mean time in system, waiting plus service, for service time ``delta``."""
    _check_rho(rho)
    if delta <= 0:
        raise InvalidInputs("service time must be > 0")
    return delta / 2.0 * (2.0 - rho) / (1.0 - rho)


def utilization_for_queue_length(nq: float) -> float:
    """Inverse of ``md1_queue_length``: positive root of rho^2 + 2 nq rho - 2 nq."""
    if nq < 0:
        raise InvalidInputs("queue length must be >= 0")
    return -nq + math.sqrt(nq * nq + 2.0 * nq)


def service_time(length_bits: float, capacity: float) -> float:
    if capacity <= 0:
        raise ZeroCapacity("link capacity must be > 0")
    return length_bits / capacity


def max_system_time(max_queue_len: float, max_packet_len: float, capacity: float) -> float:
    """Upper bound on queueing time when the largest queue is full of the largest packets."""
    if capacity <= 0:
        raise ZeroCapacity("link capacity must be > 0")
    if max_queue_len <= 0 or max_packet_len <= 0:
        raise InvalidInputs("queue length and packet length must be > 0")
    return max_queue_len * max_packet_len / capacity


@dataclass(frozen=True)
class DimensionInputs:
    max_queue_len: float  # packets
    max_packet_len: float  # bits
    min_capacity: float  # bits/second
    interfering_rates: tuple[float, ...] = ()  # packets/second

    def __post_init__(self):
        if min(self.max_queue_len, self.max_packet_len, self.min_capacity) <= 0:
            raise InvalidInputs("queue length, packet length and capacity must all be > 0")
        if any(r < 0 for r in self.interfering_rates):
            raise InvalidInputs("interfering rates must be >= 0")


def window_size(inputs: DimensionInputs) -> float:
    """Recommended time window: 3x the single-queue bound.

    The factor covers switching time and mirror-port queueing, each assumed
    no larger than the output-port queueing time.
    """
    return 3.0 * max_system_time(inputs.max_queue_len, inputs.max_packet_len, inputs.min_capacity)


def expected_packets_between(s_mean: float, interfering_rates: Sequence[float]) -> float:
    if s_mean < 0:
        raise InvalidInputs("system time must be >= 0")
    if any(r < 0 for r in interfering_rates):
        raise InvalidInputs("rates must be >= 0")
    return s_mean * math.fsum(interfering_rates)


def decompose_system_time(s: float, x: float) -> float:
    """Queueing component of a system time ``s`` given switching time ``x``."""
    if x < 0 or s < x:
        raise NegativeResidual(f"system time {s} smaller than switching time {x}")
    return s - x


@dataclass(frozen=True)
class QueueModel:
    rho: float
    delta: float
    nq_mean: float
    s_mean: float
    length_bits: float | None = None
    capacity: float | None = None

    @classmethod
    def from_link(cls, rho: float, length_bits: float, capacity: float) -> "QueueModel":
        delta = service_time(length_bits, capacity)
        return cls(rho, delta, md1_queue_length(rho), md1_system_time(rho, delta), length_bits, capacity)

    @classmethod
    def from_service_time(cls, rho: float, delta: float) -> "QueueModel":
        return cls(rho, delta, md1_queue_length(rho), md1_system_time(rho, delta))
