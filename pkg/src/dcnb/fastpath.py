"""Numba kernels for layer-scale coding and quantization.

These mirror the pure-Python bacore/ctxmodel/binarizer/quantizer paths
operation for operation; the test suite asserts byte- and index-exact
agreement between the two.  The pure modules stay the readable reference,
the kernels carry the CLI and anything sweep-sized.

Encoder state vector (int64): [low, range, cache, pending, out_pos];
cache == -1 means no byte staged yet.  Decoder state: [value, range, pos].
All kernels release the GIL so layer workers can genuinely overlap.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .bacore import PayloadTruncatedError
from .ctxmodel import _COST_NODES

_COST_NODES_ARR = np.asarray(_COST_NODES, dtype=np.int64)

_RANGE_FULL = 1 << 16
_RANGE_BOTTOM = 1 << 8
_PROB_BITS = 15
_PROB_ONE = 1 << 15
_PROB_HALF = 1 << 14
_PROB_MAX = (1 << 15) - 1

_LOW, _RANGE, _CACHE, _PENDING, _POS = 0, 1, 2, 3, 4
_DVAL, _DRANGE, _DPOS = 0, 1, 2


# ---------------------------------------------------------------------------
# range coder primitives
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True, inline="always")
def _enc_init(st):
    st[_LOW] = 0
    st[_RANGE] = _RANGE_FULL
    st[_CACHE] = -1
    st[_PENDING] = 0
    st[_POS] = 0


@njit(cache=True, nogil=True, inline="always")
def _enc_shift_low(st, out):
    low = st[_LOW]
    if low < 0xFF00 or low >= 0x10000:
        carry = low >> 16
        pos = st[_POS]
        if st[_CACHE] >= 0:
            out[pos] = (st[_CACHE] + carry) & 0xFF
            pos += 1
        fill = (0xFF + carry) & 0xFF
        for _ in range(st[_PENDING]):
            out[pos] = fill
            pos += 1
        st[_POS] = pos
        st[_PENDING] = 0
        st[_CACHE] = (low >> 8) & 0xFF
    else:
        st[_PENDING] += 1
    st[_LOW] = (low << 8) & 0xFFFF


@njit(cache=True, nogil=True, inline="always")
def _enc_bin(st, out, bit, p1):
    rng = st[_RANGE]
    r1 = (rng * p1) >> _PROB_BITS
    if r1 < 1:
        r1 = 1
    elif r1 > rng - 1:
        r1 = rng - 1
    if bit:
        st[_LOW] += rng - r1
        rng = r1
    else:
        rng -= r1
    while rng < _RANGE_BOTTOM:
        _enc_shift_low(st, out)
        rng <<= 8
    st[_RANGE] = rng


@njit(cache=True, nogil=True, inline="always")
def _enc_bypass(st, out, bit):
    rng = st[_RANGE]
    r1 = rng >> 1
    if bit:
        st[_LOW] += rng - r1
        rng = r1
    else:
        rng -= r1
    while rng < _RANGE_BOTTOM:
        _enc_shift_low(st, out)
        rng <<= 8
    st[_RANGE] = rng


@njit(cache=True, nogil=True, inline="always")
def _enc_flush(st, out):
    for _ in range(3):
        _enc_shift_low(st, out)
    return st[_POS]


@njit(cache=True, nogil=True, inline="always")
def _dec_byte(st, data):
    pos = st[_DPOS]
    if pos >= data.size:
        return np.int64(-1)
    st[_DPOS] = pos + 1
    return np.int64(data[pos])


@njit(cache=True, nogil=True, inline="always")
def _dec_init(st, data):
    st[_DVAL] = 0
    st[_DRANGE] = _RANGE_FULL
    st[_DPOS] = 0
    b0 = _dec_byte(st, data)
    b1 = _dec_byte(st, data)
    if b0 < 0 or b1 < 0:
        return -1
    st[_DVAL] = (b0 << 8) | b1
    return 0


@njit(cache=True, nogil=True, inline="always")
def _dec_bin(st, data, p1):
    """Returns the decoded bit, or -1 on payload overread."""
    rng = st[_DRANGE]
    r1 = (rng * p1) >> _PROB_BITS
    if r1 < 1:
        r1 = 1
    elif r1 > rng - 1:
        r1 = rng - 1
    r0 = rng - r1
    if st[_DVAL] >= r0:
        bit = np.int64(1)
        st[_DVAL] -= r0
        rng = r1
    else:
        bit = np.int64(0)
        rng = r0
    while rng < _RANGE_BOTTOM:
        b = _dec_byte(st, data)
        if b < 0:
            return np.int64(-1)
        st[_DVAL] = (st[_DVAL] << 8) | b
        rng <<= 8
    st[_DRANGE] = rng
    return bit


@njit(cache=True, nogil=True, inline="always")
def _dec_bypass(st, data):
    rng = st[_DRANGE]
    r1 = rng >> 1
    r0 = rng - r1
    if st[_DVAL] >= r0:
        bit = np.int64(1)
        st[_DVAL] -= r0
        rng = r1
    else:
        bit = np.int64(0)
        rng = r0
    while rng < _RANGE_BOTTOM:
        b = _dec_byte(st, data)
        if b < 0:
            return np.int64(-1)
        st[_DVAL] = (st[_DVAL] << 8) | b
        rng <<= 8
    st[_DRANGE] = rng
    return bit


# ---------------------------------------------------------------------------
# context models
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True, inline="always")
def _ctx_update(ctx, i, bit, shift):
    p1 = ctx[i]
    if bit:
        step = (_PROB_ONE - p1) >> shift
        if step == 0:
            step = 1
        p1 += step
        if p1 > _PROB_MAX:
            p1 = _PROB_MAX
    else:
        step = p1 >> shift
        if step == 0:
            step = 1
        p1 -= step
        if p1 < 1:
            p1 = 1
    ctx[i] = p1


@njit(cache=True, nogil=True, inline="always")
def _cost_units(p):
    e = np.int64(0)
    m = p
    while m < _PROB_HALF:
        m <<= 1
        e += 1
    idx = (m >> 8) - 64
    frac = m & 0xFF
    node = _COST_NODES_ARR[idx]
    return (e << 8) + node + (((_COST_NODES_ARR[idx + 1] - node) * frac) >> 8)


# ---------------------------------------------------------------------------
# tensor coding
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _encode_indices_kernel(indices, n, remainder_bits, shift, out):
    st = np.zeros(5, dtype=np.int64)
    _enc_init(st)
    ctx = np.full(n + 2, _PROB_HALF, dtype=np.int64)
    for idx in range(indices.size):
        v = np.int64(indices[idx])
        mag = -v if v < 0 else v
        sig = 1 if mag else 0
        _enc_bin(st, out, sig, ctx[0])
        _ctx_update(ctx, 0, sig, shift)
        if not sig:
            continue
        sign = 1 if v < 0 else 0
        _enc_bin(st, out, sign, ctx[1])
        _ctx_update(ctx, 1, sign, shift)
        stopped = False
        for k in range(1, n + 1):
            gt = 1 if mag > k else 0
            _enc_bin(st, out, gt, ctx[1 + k])
            _ctx_update(ctx, 1 + k, gt, shift)
            if not gt:
                stopped = True
                break
        if not stopped:
            rem = mag - n - 1
            for sh in range(remainder_bits - 1, -1, -1):
                _enc_bypass(st, out, (rem >> sh) & 1)
    return _enc_flush(st, out)


@njit(cache=True, nogil=True)
def _decode_indices_kernel(payload, n, remainder_bits, shift, out):
    st = np.zeros(3, dtype=np.int64)
    if _dec_init(st, payload) < 0:
        return -1
    ctx = np.full(n + 2, _PROB_HALF, dtype=np.int64)
    for idx in range(out.size):
        sig = _dec_bin(st, payload, ctx[0])
        if sig < 0:
            return -1
        _ctx_update(ctx, 0, sig, shift)
        if not sig:
            out[idx] = 0
            continue
        sign = _dec_bin(st, payload, ctx[1])
        if sign < 0:
            return -1
        _ctx_update(ctx, 1, sign, shift)
        mag = np.int64(n + 1)
        for k in range(1, n + 1):
            gt = _dec_bin(st, payload, ctx[1 + k])
            if gt < 0:
                return -1
            _ctx_update(ctx, 1 + k, gt, shift)
            if not gt:
                mag = np.int64(k)
                break
        if mag == n + 1:
            rem = np.int64(0)
            for _ in range(remainder_bits):
                b = _dec_bypass(st, payload)
                if b < 0:
                    return -1
                rem = (rem << 1) | b
            mag += rem
        out[idx] = -mag if sign else mag
    return 0


@njit(cache=True, nogil=True)
def _encode_bins_kernel(bins, p1s, out):
    st = np.zeros(5, dtype=np.int64)
    _enc_init(st)
    for i in range(bins.size):
        _enc_bin(st, out, np.int64(bins[i]), np.int64(p1s[i]))
    return _enc_flush(st, out)


@njit(cache=True, nogil=True)
def _decode_bins_kernel(payload, p1s, out):
    st = np.zeros(3, dtype=np.int64)
    if _dec_init(st, payload) < 0:
        return -1
    for i in range(out.size):
        b = _dec_bin(st, payload, np.int64(p1s[i]))
        if b < 0:
            return -1
        out[i] = b
    return 0


# ---------------------------------------------------------------------------
# rate-distortion quantization
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True, inline="always")
def _rate_units(k, n, remainder_bits, ctx):
    if k == 0:
        return _cost_units(_PROB_ONE - ctx[0])
    units = _cost_units(ctx[0])
    if k < 0:
        units += _cost_units(ctx[1])
        mag = -k
    else:
        units += _cost_units(_PROB_ONE - ctx[1])
        mag = k
    for j in range(1, n + 1):
        if mag > j:
            units += _cost_units(ctx[1 + j])
        else:
            units += _cost_units(_PROB_ONE - ctx[1 + j])
            return units
    if mag > n:
        units += remainder_bits << 8
    return units


@njit(cache=True, nogil=True, inline="always")
def _commit(k, n, shift, ctx):
    if k == 0:
        _ctx_update(ctx, 0, 0, shift)
        return
    _ctx_update(ctx, 0, 1, shift)
    _ctx_update(ctx, 1, 1 if k < 0 else 0, shift)
    mag = -k if k < 0 else k
    for j in range(1, n + 1):
        gt = 1 if mag > j else 0
        _ctx_update(ctx, 1 + j, gt, shift)
        if not gt:
            return


@njit(cache=True, nogil=True)
def _rd_quantize_kernel(flat, etas, delta, max_abs_index, lam, halfwidth, n,
                        rb_price, shift, out):
    ctx = np.full(n + 2, _PROB_HALF, dtype=np.int64)
    if max_abs_index == 0:
        for i in range(flat.size):
            out[i] = 0
            _commit(0, n, shift, ctx)
        return
    for i in range(flat.size):
        w = flat[i]
        eta = etas[i]
        x = w / delta
        if x >= max_abs_index:
            base = max_abs_index
        elif x <= -max_abs_index:
            base = -max_abs_index
        else:
            base = np.int64(np.floor(x + 0.5))
        lo = base - halfwidth
        if lo < -max_abs_index:
            lo = -max_abs_index
        hi = base + halfwidth
        if hi > max_abs_index:
            hi = max_abs_index

        best_k = np.int64(0)
        best_cost = eta * (w * w) + lam * (
            _rate_units(np.int64(0), n, rb_price, ctx) / 256.0)
        for k in range(lo, hi + 1):
            if k == 0:
                continue
            d = w - delta * k
            cost = eta * (d * d) + lam * (
                _rate_units(np.int64(k), n, rb_price, ctx) / 256.0)
            if cost < best_cost:
                best_cost = cost
                best_k = k
            elif cost == best_cost:
                ak = -k if k < 0 else k
                ab = -best_k if best_k < 0 else best_k
                if ak < ab or (ak == ab and k > best_k):
                    best_cost = cost
                    best_k = k
        _commit(best_k, n, shift, ctx)
        out[i] = best_k


# ---------------------------------------------------------------------------
# wrappers
# ---------------------------------------------------------------------------

def _payload_capacity(num_bins: int) -> int:
    # A bin can never cost more than 16 realized bits; 8 spare bytes cover
    # the flush and the empty-stream case.
    return num_bins * 2 + 8


def encode_indices(indices: np.ndarray, n: int, remainder_bits: int,
                   shift: int) -> bytes:
    """Layer payload for a flat int32 index sequence (fresh contexts)."""
    indices = np.ascontiguousarray(indices, dtype=np.int32)
    if indices.size:
        max_mag = int(np.max(np.abs(indices.astype(np.int64))))
        if max_mag > n + (1 << remainder_bits):
            raise ValueError(
                f"index magnitude {max_mag} exceeds max "
                f"{n + (1 << remainder_bits)} (n={n}, "
                f"remainder_bits={remainder_bits})")
    bins = indices.size * (2 + n + remainder_bits) + 8
    out = np.empty(_payload_capacity(bins), dtype=np.uint8)
    nbytes = _encode_indices_kernel(indices, n, remainder_bits, shift, out)
    return out[:nbytes].tobytes()


def decode_indices(payload: bytes, count: int, n: int, remainder_bits: int,
                   shift: int) -> np.ndarray:
    """Inverse of :func:`encode_indices`."""
    buf = np.frombuffer(payload, dtype=np.uint8)
    out = np.empty(count, dtype=np.int32)
    if _decode_indices_kernel(buf, n, remainder_bits, shift, out) < 0:
        raise PayloadTruncatedError("payload exhausted while decoding indices")
    return out


def encode_bins(bins: np.ndarray, p1s: np.ndarray) -> bytes:
    """Encode explicit bins with per-bin fixed-point probabilities."""
    bins = np.ascontiguousarray(bins, dtype=np.uint8)
    p1s = np.ascontiguousarray(p1s, dtype=np.int64)
    if bins.size != p1s.size:
        raise ValueError("bins and p1s must have the same length")
    if p1s.size and not (1 <= p1s.min() and p1s.max() <= 32767):
        raise ValueError("p1 values must be in [1, 32767]")
    out = np.empty(_payload_capacity(bins.size), dtype=np.uint8)
    nbytes = _encode_bins_kernel(bins, p1s, out)
    return out[:nbytes].tobytes()


def decode_bins(payload: bytes, p1s: np.ndarray) -> np.ndarray:
    buf = np.frombuffer(payload, dtype=np.uint8)
    p1s = np.ascontiguousarray(p1s, dtype=np.int64)
    out = np.empty(p1s.size, dtype=np.uint8)
    if _decode_bins_kernel(buf, p1s, out) < 0:
        raise PayloadTruncatedError("payload exhausted while decoding bins")
    return out


def rd_quantize(flat: np.ndarray, etas: np.ndarray, delta: float,
                max_abs_index: int, lambda_: float, halfwidth: int, n: int,
                rb_price: int, shift: int) -> np.ndarray:
    """Kernel twin of quantizer.rd_quantize_layer over flat arrays."""
    flat = np.ascontiguousarray(flat, dtype=np.float64)
    etas = np.ascontiguousarray(etas, dtype=np.float64)
    if flat.size != etas.size:
        raise ValueError("weights and etas must have the same length")
    out = np.empty(flat.size, dtype=np.int32)
    _rd_quantize_kernel(flat, etas, float(delta), max_abs_index, float(lambda_),
                        halfwidth, n, rb_price, shift, out)
    return out


def warmup() -> None:
    """Compile (or load from cache) every kernel on tiny inputs."""
    idx = np.array([0, 1, -2, 5], dtype=np.int32)
    payload = encode_indices(idx, 2, 3, 4)
    decode_indices(payload, idx.size, 2, 3, 4)
    bins = np.array([0, 1, 1, 0], dtype=np.uint8)
    p1s = np.array([16384, 1638, 30000, 500], dtype=np.int64)
    decode_bins(encode_bins(bins, p1s), p1s)
    rd_quantize(np.array([0.3, -0.2]), np.array([1.0, 1.0]), 0.1, 16,
                0.01, 2, 4, 3, 4)
