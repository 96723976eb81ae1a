"""Canonical byte packing shared by signatures, credentials, and file formats.

Every signed or hashed structure is serialized as a domain-separation tag
followed by length-prefixed fields in a fixed order, so two structures can
never collide across types. Lengths are little-endian u32.
"""

from __future__ import annotations

import struct


def u32le(value: int) -> bytes:
    return struct.pack("<I", value)


def read_u32le(data: bytes, offset: int) -> tuple[int, int]:
    if offset + 4 > len(data):
        raise ValueError("truncated u32 field")
    (value,) = struct.unpack_from("<I", data, offset)
    return value, offset + 4


def be64(value: int) -> bytes:
    if not 0 <= value < 2**64:
        raise ValueError(f"value out of u64 range: {value}")
    return value.to_bytes(8, "big")


def lp(field: bytes) -> bytes:
    """Length-prefix a single field."""
    return u32le(len(field)) + field


def read_lp(data: bytes, offset: int) -> tuple[bytes, int]:
    length, offset = read_u32le(data, offset)
    if offset + length > len(data):
        raise ValueError("truncated length-prefixed field")
    return data[offset:offset + length], offset + length


def pack_fields(tag: bytes, *fields: bytes) -> bytes:
    """Tagged canonical serialization: tag || lp(f1) || lp(f2) || ..."""
    return tag + b"".join(lp(f) for f in fields)
