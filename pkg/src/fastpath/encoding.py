"""Canonical byte encoding used for every digest in the protocol.

Every wire type serializes through these helpers with a fixed field order,
fixed-width integers, and length prefixes on variable-sized data, so that
equal values always produce equal bytes and digests are reproducible across
runs and processes.
"""

from __future__ import annotations

import hashlib
import struct
from typing import Iterable

DIGEST_SIZE = 32
ID_SIZE = 32


def enc_u32(value: int) -> bytes:
    return struct.pack(">I", value)


def enc_u64(value: int) -> bytes:
    return struct.pack(">Q", value)


def enc_i64(value: int) -> bytes:
    return struct.pack(">q", value)


def enc_bytes(data: bytes) -> bytes:
    return enc_u32(len(data)) + data


def enc_str(text: str) -> bytes:
    return enc_bytes(text.encode("utf-8"))


def enc_seq(chunks: Iterable[bytes]) -> bytes:
    parts = list(chunks)
    return enc_u32(len(parts)) + b"".join(parts)


def enc_opt(chunk: bytes | None) -> bytes:
    if chunk is None:
        return b"\x00"
    return b"\x01" + chunk


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def tagged_digest(tag: str, data: bytes) -> bytes:
    """Domain-separated digest; `tag` names the message kind."""
    return hashlib.sha256(enc_str(tag) + data).digest()


def hx(data: bytes) -> str:
    return data.hex()
