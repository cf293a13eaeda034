"""Binarization of quantized integer indices and the tensor scan.

Each index becomes a short bin string: a significance flag, a sign flag,
a truncated-unary run of greater-than-k flags (one adaptive model each),
and, for magnitudes above the flag count n, a fixed-length remainder sent
as bypass bins, most-significant bit first.  Tensors are scanned in
row-major order; coding is order-sensitive because the models adapt.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .bacore import ArithDecoder, ArithEncoder
from .ctxmodel import ContextSet


class Bin(NamedTuple):
    """One binary decision with its channel tag.

    channel is "sig", "sign", "gr<k>" (1-based), or "rem" for the bypass
    remainder bits.
    """

    channel: str
    bit: int


@dataclass(frozen=True)
class BinarizationParams:
    """Flag count n and the fixed remainder width for one layer."""

    n: int
    remainder_bits: int

    def __post_init__(self) -> None:
        if self.n < 0:
            raise ValueError("n must be >= 0")
        if not 0 <= self.remainder_bits <= 32:
            raise ValueError("remainder_bits must be in [0, 32]")

    @property
    def max_magnitude(self) -> int:
        """Largest encodable |index|: n + 2**remainder_bits."""
        return self.n + (1 << self.remainder_bits)


def min_remainder_bits(max_abs_index: int, n: int) -> int:
    """Minimal remainder width so every |index| <= max_abs_index encodes."""
    if max_abs_index <= n + 1:
        return 0
    return int(max_abs_index - n - 1).bit_length()


@dataclass
class QuantIndexTensor:
    """Row-major flat sequence of signed quantization indices."""

    rows: int
    cols: int
    indices: np.ndarray  # int32, shape (rows * cols,)

    def __post_init__(self) -> None:
        self.indices = np.ascontiguousarray(self.indices, dtype=np.int32)
        if self.indices.ndim != 1 or self.indices.size != self.rows * self.cols:
            raise ValueError(
                f"index count {self.indices.size} != {self.rows}x{self.cols}")

    def as_matrix(self) -> np.ndarray:
        return self.indices.reshape(self.rows, self.cols)


def binarize_index(v: int, params: BinarizationParams) -> list[Bin]:
    """Map one signed index to its tagged bin string."""
    mag = abs(int(v))
    if mag > params.max_magnitude:
        raise ValueError(
            f"index {v} exceeds max magnitude {params.max_magnitude} "
            f"(n={params.n}, remainder_bits={params.remainder_bits})")
    if mag == 0:
        return [Bin("sig", 0)]
    bins = [Bin("sig", 1), Bin("sign", 1 if v < 0 else 0)]
    for k in range(1, params.n + 1):
        gt = 1 if mag > k else 0
        bins.append(Bin(f"gr{k}", gt))
        if not gt:
            return bins
    if mag > params.n:
        rem = mag - params.n - 1
        for shift in range(params.remainder_bits - 1, -1, -1):
            bins.append(Bin("rem", (rem >> shift) & 1))
    return bins


def encode_index(v: int, params: BinarizationParams, ctx: ContextSet,
                 enc: ArithEncoder) -> None:
    """Binarize one index and drive the coder; commits context updates."""
    mag = abs(int(v))
    if mag > params.max_magnitude:
        raise ValueError(
            f"index {v} exceeds max magnitude {params.max_magnitude} "
            f"(n={params.n}, remainder_bits={params.remainder_bits})")
    sig = 1 if mag else 0
    enc.encode_bin(sig, ctx.sig.p1)
    ctx.sig.update(sig)
    if not sig:
        return
    sign = 1 if v < 0 else 0
    enc.encode_bin(sign, ctx.sign.p1)
    ctx.sign.update(sign)
    for k in range(1, params.n + 1):
        gt = 1 if mag > k else 0
        model = ctx.gr[k - 1]
        enc.encode_bin(gt, model.p1)
        model.update(gt)
        if not gt:
            return
    if mag > params.n:
        rem = mag - params.n - 1
        for shift in range(params.remainder_bits - 1, -1, -1):
            enc.encode_bypass((rem >> shift) & 1)


def decode_index(params: BinarizationParams, ctx: ContextSet,
                 dec: ArithDecoder) -> int:
    """Inverse of :func:`encode_index` against identical context state."""
    sig = dec.decode_bin(ctx.sig.p1)
    ctx.sig.update(sig)
    if not sig:
        return 0
    sign = dec.decode_bin(ctx.sign.p1)
    ctx.sign.update(sign)
    mag = params.n + 1
    for k in range(1, params.n + 1):
        model = ctx.gr[k - 1]
        gt = dec.decode_bin(model.p1)
        model.update(gt)
        if not gt:
            mag = k
            break
    if mag == params.n + 1:
        # No gr flag terminated the run: the remainder completes |v|.
        rem = 0
        for _ in range(params.remainder_bits):
            rem = (rem << 1) | dec.decode_bypass()
        mag += rem
    return -mag if sign else mag


def encode_tensor(q: QuantIndexTensor, params: BinarizationParams,
                  ctx: ContextSet, enc: ArithEncoder) -> None:
    """Code all indices in row-major order (they are stored that way)."""
    for v in q.indices:
        encode_index(int(v), params, ctx, enc)


def decode_tensor(dims: tuple[int, int], params: BinarizationParams,
                  ctx: ContextSet, dec: ArithDecoder) -> QuantIndexTensor:
    rows, cols = dims
    out = np.empty(rows * cols, dtype=np.int32)
    for i in range(out.size):
        out[i] = decode_index(params, ctx, dec)
    return QuantIndexTensor(rows, cols, out)


def matrixify(raw: np.ndarray) -> np.ndarray:
    """Bring a weight tensor into matrix form.

    Rank 2 passes through; rank 4 (out_ch, in_ch, kh, kw) reshapes to
    (out_ch, in_ch*kh*kw) with in_ch major, then kh, then kw within each
    row (plain C-order flattening of the trailing axes).
    """
    if raw.ndim == 2:
        return raw
    if raw.ndim == 4:
        return raw.reshape(raw.shape[0], -1)
    raise ValueError(f"unsupported tensor rank {raw.ndim} (want 2 or 4)")
