"""Classic libpcap file reading and writing."""

from __future__ import annotations

import struct
import sys
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator

from .packet import LINKTYPE_ETHERNET, RawPacket, UnsupportedLinkType

MAGIC_USEC = 0xA1B2C3D4
MAGIC_NSEC = 0xA1B23C4D
PCAPNG_MAGIC = 0x0A0D0D0A
DEFAULT_SNAPLEN = 262144

_GLOBAL_HEADER = "IHHiIII"
_RECORD_HEADER = "IIII"


class CaptureError(ValueError):
    pass


class BadMagic(CaptureError):
    pass


class UnsupportedFormat(BadMagic):
    pass


class TruncatedHeader(CaptureError):
    pass


class PcapReader:
    """Iterate over the records of an open classic pcap stream.

    Either byte order is accepted, with microsecond or nanosecond timestamps.
    """

    def __init__(self, fh: BinaryIO):
        self._fh = fh
        head = fh.read(24)
        if len(head) < 4:
            raise TruncatedHeader("file shorter than the pcap magic")
        for order in "<>":
            (magic,) = struct.unpack(order + "I", head[:4])
            if magic in (MAGIC_USEC, MAGIC_NSEC):
                break
        else:
            if struct.unpack("<I", head[:4])[0] == PCAPNG_MAGIC:
                raise UnsupportedFormat(
                    "pcapng is not supported; expected classic pcap magic 0xa1b2c3d4 or 0xa1b23c4d"
                )
            raise BadMagic(f"unknown magic 0x{head[:4].hex()}; expected 0xa1b2c3d4 or 0xa1b23c4d")
        if len(head) < 24:
            raise TruncatedHeader("pcap global header shorter than 24 bytes")
        self.byteorder = order
        _, self.version_major, self.version_minor, _, _, self.snaplen, self.link_type = struct.unpack(
            order + _GLOBAL_HEADER, head
        )
        self.link_type &= 0x0FFFFFFF  # upper bits carry FCS info
        self.nanosecond = magic == MAGIC_NSEC
        self._record = struct.Struct(order + _RECORD_HEADER)
        self._index = 0

    def __iter__(self) -> Iterator[RawPacket]:
        read = self._fh.read
        rec = self._record
        scale = 1e-9 if self.nanosecond else 1e-6
        while True:
            head = read(16)
            if not head:
                return
            if len(head) < 16:
                raise TruncatedHeader(f"record {self._index}: partial record header")
            sec, frac, incl, orig = rec.unpack(head)
            data = read(incl)
            if len(data) < incl:
                raise TruncatedHeader(f"record {self._index}: expected {incl} bytes, got {len(data)}")
            yield RawPacket(self._index, sec + frac * scale, data, max(orig, incl))
            self._index += 1


def read_capture(path: str | Path, *, require_ethernet: bool = True) -> Iterator[RawPacket]:
    """Yield the packets of a classic pcap file in file order."""
    with open(path, "rb") as fh:
        reader = PcapReader(fh)
        if require_ethernet and reader.link_type != LINKTYPE_ETHERNET:
            raise UnsupportedLinkType(f"{path}: link type {reader.link_type} is not Ethernet")
        yield from reader


def capture_link_type(path: str | Path) -> int:
    with open(path, "rb") as fh:
        return PcapReader(fh).link_type


class PcapWriter:
    def __init__(self, fh: BinaryIO, link_type: int = LINKTYPE_ETHERNET, snaplen: int = DEFAULT_SNAPLEN):
        self._fh = fh
        order = "<" if sys.byteorder == "little" else ">"
        self._record = struct.Struct(order + _RECORD_HEADER)
        fh.write(struct.pack(order + _GLOBAL_HEADER, MAGIC_USEC, 2, 4, 0, 0, snaplen, link_type))
        self.count = 0

    def write(self, pkt: RawPacket):
        usec = round(pkt.timestamp * 1e6)
        sec, frac = divmod(usec, 1_000_000)
        self._fh.write(self._record.pack(sec, frac, len(pkt.data), pkt.original_len))
        self._fh.write(pkt.data)
        self.count += 1


def write_capture(path: str | Path, packets: Iterable[RawPacket], link_type: int = LINKTYPE_ETHERNET) -> int:
    """Write packets as a microsecond pcap in host byte order; returns the count."""
    with open(path, "wb") as fh:
        writer = PcapWriter(fh, link_type)
        for pkt in packets:
            writer.write(pkt)
        return writer.count
