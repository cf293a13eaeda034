"""Uncompressed weight/sigma tensor container (.dcnw) and layer selection.

Layout, little-endian throughout:

    magic   4 bytes  "DCNW"
    version u16      (currently 1)
    count   u32      number of entries
    per entry:
        name_len u16, name bytes (UTF-8)
        role u8          0 = weight, 1 = sigma, 2 = excluded
        rank u8          0..4
        dims rank*u32
        data float32 LE, row-major, 4 * prod(dims) bytes

Names are unique per role; a sigma entry pairs with the weight entry of
the same name.  Rank-0/1 entries (biases, norm parameters) must carry the
excluded role; the loader enforces the tag instead of inferring it.
NaN or infinite values are rejected at load.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .binarizer import matrixify

MAGIC = b"DCNW"
VERSION = 1

_MAX_RANK = 4


class Role(enum.IntEnum):
    WEIGHT = 0
    SIGMA = 1
    EXCLUDED = 2


class TensorFileError(ValueError):
    """Malformed .dcnw content or an I/O-level problem with it."""


@dataclass
class TensorEntry:
    name: str
    role: Role
    data: np.ndarray  # float32, C-order

    def __post_init__(self) -> None:
        # np.ascontiguousarray would promote rank 0 to rank 1; asarray
        # keeps the rank and 0-d arrays are always contiguous.
        self.data = np.asarray(self.data, dtype=np.float32)
        if not self.data.flags.c_contiguous:
            self.data = np.ascontiguousarray(self.data)
        if self.data.ndim > _MAX_RANK:
            raise TensorFileError(
                f"entry {self.name!r}: rank {self.data.ndim} exceeds {_MAX_RANK}")


@dataclass
class CodableLayer:
    """A weight tensor in matrix form, ready for the codec."""

    name: str
    matrix: np.ndarray  # float32, 2-D
    orig_shape: tuple[int, ...]
    sigma: np.ndarray | None  # float32, same matrix shape, or None


def save(path: Union[str, Path], entries: list[TensorEntry]) -> None:
    """Write entries in the given order; load(save(x)) is bit-exact."""
    _check_entries(entries)
    out = bytearray()
    out += MAGIC
    out += struct.pack("<HI", VERSION, len(entries))
    for e in entries:
        name = e.name.encode("utf-8")
        if len(name) > 0xFFFF:
            raise TensorFileError(f"entry name longer than 65535 bytes")
        out += struct.pack("<H", len(name))
        out += name
        out += struct.pack("<BB", int(e.role), e.data.ndim)
        out += struct.pack(f"<{e.data.ndim}I", *e.data.shape)
        out += e.data.astype("<f4", copy=False).tobytes(order="C")
    Path(path).write_bytes(bytes(out))


def _check_entries(entries: list[TensorEntry]) -> None:
    seen: set[tuple[int, str]] = set()
    for e in entries:
        key = (int(e.role), e.name)
        if key in seen:
            raise TensorFileError(
                f"duplicate {e.role.name.lower()} entry {e.name!r}")
        seen.add(key)
        if e.role != Role.EXCLUDED and e.data.ndim < 2:
            raise TensorFileError(
                f"entry {e.name!r}: rank {e.data.ndim} must be marked excluded")
        if not np.all(np.isfinite(e.data)):
            raise TensorFileError(f"entry {e.name!r} contains NaN or Inf")


def load(path: Union[str, Path]) -> list[TensorEntry]:
    """Read and validate all entries of a .dcnw file."""
    data = Path(path).read_bytes()
    pos = 0

    def take(count: int, what: str) -> bytes:
        nonlocal pos
        if pos + count > len(data):
            raise TensorFileError(f"truncated while reading {what} (at byte {pos})")
        chunk = data[pos:pos + count]
        pos += count
        return chunk

    if take(4, "magic") != MAGIC:
        raise TensorFileError("bad magic (not a .dcnw file)")
    version, count = struct.unpack("<HI", take(6, "file header"))
    if version != VERSION:
        raise TensorFileError(f"unsupported version {version} (want {VERSION})")
    entries: list[TensorEntry] = []
    for i in range(count):
        (name_len,) = struct.unpack("<H", take(2, f"entry {i} name length"))
        try:
            name = take(name_len, f"entry {i} name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise TensorFileError(f"entry {i} name is not valid UTF-8") from exc
        role_raw, rank = struct.unpack("<BB", take(2, f"entry {name!r} header"))
        try:
            role = Role(role_raw)
        except ValueError as exc:
            raise TensorFileError(
                f"entry {name!r}: unknown role {role_raw}") from exc
        if rank > _MAX_RANK:
            raise TensorFileError(
                f"entry {name!r}: rank {rank} exceeds {_MAX_RANK}")
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"entry {name!r} dims"))
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        raw = take(4 * size, f"entry {name!r} data")
        arr = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
        entries.append(TensorEntry(name=name, role=role, data=arr))
    if pos != len(data):
        raise TensorFileError(f"{len(data) - pos} trailing bytes after last entry")
    _check_entries(entries)
    return entries


def select_codable(entries: list[TensorEntry]) -> list[CodableLayer]:
    """Pick the weight tensors the codec operates on, in stable name order.

    Weights must be rank 2 or 4 and come out matrixified; a sigma entry of
    the same name must match the weight's shape elementwise.
    """
    sigmas = {e.name: e for e in entries if e.role == Role.SIGMA}
    layers: list[CodableLayer] = []
    for e in sorted((e for e in entries if e.role == Role.WEIGHT),
                    key=lambda e: e.name):
        if e.data.ndim not in (2, 4):
            raise TensorFileError(
                f"weight {e.name!r}: rank {e.data.ndim} is not codable "
                f"(want 2 or 4; mark it excluded otherwise)")
        if e.data.size == 0:
            raise TensorFileError(f"weight {e.name!r} has a zero dimension")
        sigma_entry = sigmas.get(e.name)
        sigma = None
        if sigma_entry is not None:
            if sigma_entry.data.shape != e.data.shape:
                raise TensorFileError(
                    f"sigma for {e.name!r} has dims {sigma_entry.data.shape}, "
                    f"weight has {e.data.shape}")
            if not np.all(sigma_entry.data > 0):
                raise TensorFileError(
                    f"sigma for {e.name!r} has nonpositive values")
            sigma = matrixify(sigma_entry.data)
        layers.append(CodableLayer(name=e.name, matrix=matrixify(e.data),
                                   orig_shape=e.data.shape, sigma=sigma))
    return layers
