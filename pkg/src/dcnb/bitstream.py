"""Bit-exact container for a compressed model (.dcnb).

Layout, all integers little-endian, strings length-prefixed (u16 + UTF-8):

    magic   4 bytes  "DCNB"
    version u16      (currently 1)
    count   u32      number of layers
    per layer:
        name_len u16, name bytes
        rows u32, cols u32
        rank u8, dims rank*u32     original tensor shape (rank <= 4)
        delta f64                  raw IEEE-754 bits, so grids agree
                                   bit-exactly across platforms
        s u32
        n_flags u8
        remainder_bits u8
        adaptation_shift u8
        payload_len u32, payload bytes

Serialization is byte-deterministic; parsing validates everything and
reports a distinct error kind with the byte offset of the problem.
Parser sanity limits (rejected as bad_field): remainder_bits > 31 and
layers above 2^32 elements, neither of which the encoder can produce.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

MAGIC = b"DCNB"
VERSION = 1

# Error kinds reported by parse().
BAD_MAGIC = "bad_magic"
BAD_VERSION = "bad_version"
TRUNCATED = "truncated"
BAD_FIELD = "bad_field"
LENGTH_MISMATCH = "length_mismatch"

_MAX_RANK = 4
_U16_MAX = 0xFFFF
_U32_MAX = 0xFFFFFFFF


class FormatError(ValueError):
    """Malformed container; carries an error kind and a byte offset."""

    def __init__(self, kind: str, offset: int, message: str) -> None:
        super().__init__(f"{message} (at byte {offset})")
        self.kind = kind
        self.offset = offset


@dataclass(frozen=True)
class LayerHeader:
    """Everything a decoder needs to reconstruct one layer, sans payload."""

    name: str
    rows: int
    cols: int
    orig_shape: tuple[int, ...]
    delta: float
    s: int
    n_flags: int
    remainder_bits: int
    adaptation_shift: int
    payload_len: int

    def validate(self) -> None:
        if len(self.name.encode("utf-8")) > _U16_MAX:
            raise ValueError(f"layer name longer than {_U16_MAX} bytes")
        if not 1 <= len(self.orig_shape) <= _MAX_RANK:
            raise ValueError(f"orig_shape rank {len(self.orig_shape)} not in 1..{_MAX_RANK}")
        if self.rows * self.cols != math.prod(self.orig_shape):
            raise ValueError(
                f"rows*cols {self.rows * self.cols} != prod(orig_shape) "
                f"{math.prod(self.orig_shape)}")
        if not (self.delta > 0.0 and math.isfinite(self.delta)):
            raise ValueError(f"delta must be finite and > 0, got {self.delta}")
        for field, val in (("rows", self.rows), ("cols", self.cols),
                           ("s", self.s), ("payload_len", self.payload_len)):
            if not 0 <= val <= _U32_MAX:
                raise ValueError(f"{field} out of u32 range: {val}")
        for field, val in (("n_flags", self.n_flags),
                           ("adaptation_shift", self.adaptation_shift)):
            if not 0 <= val <= 0xFF:
                raise ValueError(f"{field} out of u8 range: {val}")
        if not 0 <= self.remainder_bits <= 31:
            raise ValueError(
                f"remainder_bits out of range 0..31: {self.remainder_bits}")
        if self.rows * self.cols > 1 << 32:
            raise ValueError("layer exceeds 2^32 elements")


Model = list[tuple[LayerHeader, bytes]]


def serialize(model: Model) -> bytes:
    """Encode headers and payloads; deterministic for equal inputs."""
    if len(model) > _U32_MAX:
        raise ValueError("layer count exceeds u32")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<HI", VERSION, len(model))
    for header, payload in model:
        header.validate()
        if header.payload_len != len(payload):
            raise ValueError(
                f"layer {header.name!r}: payload_len {header.payload_len} "
                f"!= actual {len(payload)}")
        name = header.name.encode("utf-8")
        out += struct.pack("<H", len(name))
        out += name
        out += struct.pack("<II", header.rows, header.cols)
        out += struct.pack("<B", len(header.orig_shape))
        out += struct.pack(f"<{len(header.orig_shape)}I", *header.orig_shape)
        out += struct.pack("<d", header.delta)
        out += struct.pack("<IBBB", header.s, header.n_flags,
                           header.remainder_bits, header.adaptation_shift)
        out += struct.pack("<I", header.payload_len)
        out += payload
    return bytes(out)


class _Reader:
    __slots__ = ("data", "pos")

    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def take(self, count: int, what: str) -> bytes:
        if self.pos + count > len(self.data):
            raise FormatError(TRUNCATED, self.pos,
                              f"truncated while reading {what}")
        chunk = self.data[self.pos:self.pos + count]
        self.pos += count
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def parse(data: bytes) -> Model:
    """Inverse of :func:`serialize`; never crashes on garbage input."""
    r = _Reader(bytes(data))
    if r.take(4, "magic") != MAGIC:
        raise FormatError(BAD_MAGIC, 0, "bad magic")
    at = r.pos
    version, count = r.unpack("<HI", "file header")
    if version != VERSION:
        raise FormatError(BAD_VERSION, at,
                          f"unsupported version {version} (want {VERSION})")
    model: Model = []
    for i in range(count):
        layer = f"layer {i}"
        (name_len,) = r.unpack("<H", f"{layer} name length")
        at = r.pos
        raw_name = r.take(name_len, f"{layer} name")
        try:
            name = raw_name.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(BAD_FIELD, at,
                              f"{layer} name is not valid UTF-8") from exc
        rows, cols = r.unpack("<II", f"{layer} dims")
        at = r.pos
        (rank,) = r.unpack("<B", f"{layer} rank")
        if not 1 <= rank <= _MAX_RANK:
            raise FormatError(BAD_FIELD, at,
                              f"{layer} rank {rank} not in 1..{_MAX_RANK}")
        orig_shape = r.unpack(f"<{rank}I", f"{layer} shape")
        at = r.pos
        (delta,) = r.unpack("<d", f"{layer} delta")
        if not (delta > 0.0 and math.isfinite(delta)):
            raise FormatError(BAD_FIELD, at,
                              f"{layer} delta is not finite and positive")
        at = r.pos
        s, n_flags, remainder_bits, adaptation_shift = r.unpack(
            "<IBBB", f"{layer} coding parameters")
        if remainder_bits > 31:
            raise FormatError(BAD_FIELD, at + 5,
                              f"{layer} remainder_bits {remainder_bits} > 31")
        if rows * cols > 1 << 32:
            raise FormatError(BAD_FIELD, at,
                              f"{layer} exceeds 2^32 elements")
        if rows * cols != math.prod(orig_shape):
            raise FormatError(
                LENGTH_MISMATCH, at,
                f"{layer} ({name!r}): rows*cols {rows * cols} != "
                f"prod(shape) {math.prod(orig_shape)}")
        at = r.pos
        (payload_len,) = r.unpack("<I", f"{layer} payload length")
        payload = r.take(payload_len, f"{layer} ({name!r}) payload")
        model.append((
            LayerHeader(name=name, rows=rows, cols=cols,
                        orig_shape=tuple(orig_shape), delta=delta, s=s,
                        n_flags=n_flags, remainder_bits=remainder_bits,
                        adaptation_shift=adaptation_shift,
                        payload_len=payload_len),
            payload,
        ))
    if r.pos != len(r.data):
        raise FormatError(LENGTH_MISMATCH, r.pos,
                          f"{len(r.data) - r.pos} trailing bytes after last layer")
    return model
