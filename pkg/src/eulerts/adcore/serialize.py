"""Versioned flat parameter container.

Layout (all integers little-endian)::

    magic  b"EGPARAM\\0"      8 bytes
    version                  uint32
    count                    uint32
    count x {
        name_len             uint16, followed by UTF-8 name
        ndim                 uint8,  followed by ndim x uint32 shape
        values               prod(shape) x float64 (little-endian)
    }
"""

from __future__ import annotations

import struct
from typing import Sequence

import numpy as np

MAGIC = b"EGPARAM\0"
VERSION = 1


class ContainerError(ValueError):
    """Malformed or truncated parameter container."""


class ContainerVersionError(ContainerError):
    pass


def pack_params(named: Sequence[tuple[str, np.ndarray]]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(named))]
    for name, arr in named:
        arr = np.asarray(arr, dtype=np.float64)
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.astype("<f8").tobytes(order="C"))
    return b"".join(parts)


def unpack_params(buf: bytes, offset: int = 0) -> tuple[list[tuple[str, np.ndarray]], int]:
    """Inverse of :func:`pack_params`; returns entries and the end offset."""

    def take(n):
        nonlocal offset
        if offset + n > len(buf):
            raise ContainerError("parameter container truncated")
        chunk = buf[offset:offset + n]
        offset += n
        return chunk

    if take(len(MAGIC)) != MAGIC:
        raise ContainerError("bad parameter container magic")
    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise ContainerVersionError(f"parameter container version {version}, expected {VERSION}")
    out = []
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        try:
            name = take(name_len).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ContainerError(f"bad parameter name: {exc}") from None
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        n = int(np.prod(shape)) if ndim else 1
        values = np.frombuffer(take(8 * n), dtype="<f8").astype(np.float64).reshape(shape)
        out.append((name, values))
    return out, offset
