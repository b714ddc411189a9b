"""Bit-exact binary encoding of one scan of the skin.

Layout (little-endian)::

    magic      2 bytes   b"CS"
    version    u8        1
    count      u16       number of readings
    sequence   u32
    timestamp  u64       microseconds
    readings   count x i32, units of 0.5 fF
    crc32      u32       IEEE CRC-32 of every preceding byte
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

MAGIC = b"CS"
VERSION = 1
HEADER = struct.Struct("<2sBHIQ")
CRC = struct.Struct("<I")
LENGTH_PREFIX = struct.Struct("<I")
HEADER_SIZE = HEADER.size  # 17
COUNTS_PER_PF = 2000
MAX_READING = 30000  # 15 pF


class FrameError(ValueError):
    """Base class for encode/decode failures."""


class ShortBufferError(FrameError):
    pass


class BadMagicError(FrameError):
    pass


class UnknownVersionError(FrameError):
    pass


class LengthMismatchError(FrameError):
    pass


class CrcMismatchError(FrameError):
    pass


class ReadingRangeError(FrameError):
    pass


@dataclass(frozen=True)
class Frame:
    sequence: int
    timestamp_us: int
    readings: tuple[int, ...]
    version: int = VERSION

    @classmethod
    def from_capacitance(cls, sequence: int, timestamp_us: int, values_pf) -> "Frame":
        counts = np.round(np.asarray(values_pf, dtype=float) * COUNTS_PER_PF).astype(np.int64)
        return cls(sequence, timestamp_us, tuple(int(v) for v in counts))

    @property
    def capacitance(self) -> np.ndarray:
        return np.asarray(self.readings, dtype=float) / COUNTS_PER_PF

    @property
    def encoded_size(self) -> int:
        return HEADER_SIZE + 4 * len(self.readings) + CRC.size


def encode_frame(frame: Frame) -> bytes:
    n = len(frame.readings)
    if n > 0xFFFF:
        raise FrameError(f"too many readings: {n}")
    if not 0 <= frame.sequence <= 0xFFFFFFFF:
        raise FrameError(f"sequence {frame.sequence} does not fit in u32")
    if not 0 <= frame.timestamp_us <= 0xFFFFFFFFFFFFFFFF:
        raise FrameError(f"timestamp {frame.timestamp_us} does not fit in u64")
    readings = np.asarray(frame.readings, dtype=np.int64)
    if n and np.abs(readings).max() > MAX_READING:
        bad = int(np.argmax(np.abs(readings)))
        raise ReadingRangeError(f"reading {bad} = {readings[bad]} exceeds +/-{MAX_READING}")
    body = HEADER.pack(MAGIC, frame.version, n, frame.sequence, frame.timestamp_us)
    body += readings.astype("<i4").tobytes()
    return body + CRC.pack(zlib.crc32(body))


def decode_frame(buf: bytes) -> Frame:
    """Parse and validate one encoded frame.

    Checks run in a fixed order (size, magic, version, length, CRC, range) and each
    raises its own :class:`FrameError` subclass.
    """
    buf = bytes(buf)
    if len(buf) < HEADER_SIZE + CRC.size:
        raise ShortBufferError(f"{len(buf)} bytes is shorter than an empty frame")
    magic, version, n, seq, ts = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise UnknownVersionError(f"unknown version {version}")
    expected = HEADER_SIZE + 4 * n + CRC.size
    if len(buf) != expected:
        raise LengthMismatchError(f"count {n} implies {expected} bytes, got {len(buf)}")
    (crc,) = CRC.unpack_from(buf, expected - CRC.size)
    if zlib.crc32(buf[: expected - CRC.size]) != crc:
        raise CrcMismatchError("CRC-32 mismatch")
    readings = np.frombuffer(buf, dtype="<i4", count=n, offset=HEADER_SIZE)
    if n and np.abs(readings.astype(np.int64)).max() > MAX_READING:
        raise ReadingRangeError(f"reading beyond +/-{MAX_READING} counts")
    return Frame(seq, ts, tuple(int(v) for v in readings), version)


def frame_with_prefix(frame: Frame) -> bytes:
    data = encode_frame(frame)
    return LENGTH_PREFIX.pack(len(data)) + data


def iter_frame_log(data: bytes):
    """Yield frames from concatenated length-prefixed encodings."""
    pos = 0
    while pos < len(data):
        if pos + LENGTH_PREFIX.size > len(data):
            raise ShortBufferError(f"truncated length prefix at offset {pos}")
        (size,) = LENGTH_PREFIX.unpack_from(data, pos)
        pos += LENGTH_PREFIX.size
        if pos + size > len(data):
            raise ShortBufferError(f"truncated frame at offset {pos}")
        yield decode_frame(data[pos : pos + size])
        pos += size
