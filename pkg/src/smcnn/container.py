"""
MFLW1 dataset container shared by raw records and preprocessed windows.

Layout, all little-endian:

    b"MFLW1"                   magic, 5 bytes
    u16                        format version
    u32 count, u32 M, u32 N    record count and per-record matrix shape
    count x (u8 label, M*N f32 time-major)
    u32                        CRC32 of every preceding byte
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ChecksumError, FormatError, MagicError, TruncatedError, VersionError

MAGIC = b"MFLW1"
VERSION = 1
_HEADER = struct.Struct("<5sHIII")
_CRC = struct.Struct("<I")


@dataclass
class Container:
    values: np.ndarray   # (count, M, N) float32
    labels: np.ndarray   # (count,) uint8

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.values.ndim != 3:
            raise ValueError(f"values must be (count, M, N), got {self.values.shape}")
        if self.labels.shape != (len(self.values),):
            raise ValueError("one label per record required")
        if np.any(self.labels > 1):
            raise ValueError("labels must be 0 (normal) or 1 (defect)")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape


def encode(container: Container) -> bytes:
    count, M, N = container.shape
    body = np.empty((count, 1 + 4 * M * N), dtype=np.uint8)
    body[:, 0] = container.labels
    body[:, 1:] = container.values.astype("<f4").reshape(count, M * N).view(np.uint8)
    data = _HEADER.pack(MAGIC, VERSION, count, M, N) + body.tobytes()
    return data + _CRC.pack(zlib.crc32(data))


def decode(data: bytes) -> Container:
    if len(data) < _HEADER.size + _CRC.size:
        raise TruncatedError(f"container of {len(data)} bytes is shorter than its header")
    magic, version, count, M, N = _HEADER.unpack_from(data)
    record = 1 + 4 * M * N
    expected = _HEADER.size + count * record + _CRC.size
    if len(data) < expected:
        raise TruncatedError(f"container declares {count} records ({expected} bytes), "
                             f"found {len(data)} bytes")
    if len(data) > expected:
        raise FormatError(f"{len(data) - expected} trailing bytes after container payload")
    (stored,) = _CRC.unpack_from(data, len(data) - _CRC.size)
    if zlib.crc32(data[:-_CRC.size]) != stored:
        raise ChecksumError("container checksum mismatch")
    if magic != MAGIC:
        raise MagicError(f"not an MFLW1 container (magic {magic!r})")
    if version != VERSION:
        raise VersionError(f"container version {version}, this build reads {VERSION}")
    body = np.frombuffer(data, dtype=np.uint8, count=count * record,
                         offset=_HEADER.size).reshape(count, record)
    labels = body[:, 0].copy()
    if np.any(labels > 1):
        raise FormatError(f"label byte {int(labels.max())} is neither 0 nor 1")
    values = body[:, 1:].copy().view("<f4").reshape(count, M, N).astype(np.float32)
    return Container(values, labels)


def write(path, container: Container) -> None:
    Path(path).write_bytes(encode(container))


def read(path) -> Container:
    return decode(Path(path).read_bytes())
