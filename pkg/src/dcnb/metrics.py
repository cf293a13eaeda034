"""Evaluation helpers: ratios, distortion, entropy, and a Huffman baseline.

The Huffman baseline is a canonical scalar code over the empirical index
distribution.  Its reported size includes a stated table cost of 40 bits
per distinct symbol (8-bit code length + 32-bit symbol value) so that
comparisons against the adaptive coder are honest about side information.
"""

from __future__ import annotations

import heapq
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .binarizer import QuantIndexTensor
from .quantizer import QuantGrid

HUFFMAN_TABLE_BITS_PER_SYMBOL = 8 + 32


@dataclass(frozen=True)
class CompressionRatio:
    ratio: float  # original / compressed, the "x63.6" convention
    percent: float  # compressed / original * 100


def compression_ratio(original_bytes: float, compressed_bytes: float) -> CompressionRatio:
    if original_bytes <= 0:
        raise ValueError("original size must be > 0")
    return CompressionRatio(ratio=original_bytes / compressed_bytes,
                            percent=compressed_bytes / original_bytes * 100.0)


def sparsity(q: QuantIndexTensor) -> float:
    """Fraction of nonzero indices (the |w != 0| / |w| convention)."""
    if q.indices.size == 0:
        raise ValueError("empty tensor")
    return float(np.count_nonzero(q.indices)) / q.indices.size


def weighted_distortion(weights: np.ndarray, q: QuantIndexTensor,
                        grid: QuantGrid,
                        sigmas: np.ndarray | None = None) -> float:
    """Sum of eta_i * (w_i - delta*I_i)^2 in 64-bit accumulation."""
    w = np.asarray(weights, dtype=np.float64)
    if w.size != q.indices.size:
        raise ValueError(f"dims mismatch: {w.size} weights vs {q.indices.size} indices")
    err = w.ravel() - grid.delta * q.indices.astype(np.float64)
    if sigmas is None:
        return float(np.sum(err * err))
    sg = np.asarray(sigmas, dtype=np.float64)
    if sg.size != w.size:
        raise ValueError(f"dims mismatch: {sg.size} sigmas vs {w.size} weights")
    return float(np.sum(err * err / np.square(sg.ravel())))


def empirical_entropy(q: QuantIndexTensor) -> float:
    """First-order entropy of the index distribution, bits per symbol."""
    if q.indices.size == 0:
        raise ValueError("empty tensor")
    _, counts = np.unique(q.indices, return_counts=True)
    p = counts / q.indices.size
    return float(-np.sum(p * np.log2(p)))


def huffman_code_lengths(counts: Counter) -> dict:
    """Optimal prefix-code lengths for the given symbol counts.

    A single symbol class still needs 1 bit per occurrence (the prefix
    code floor).
    """
    if not counts:
        raise ValueError("empty distribution")
    if len(counts) == 1:
        (sym,) = counts
        return {sym: 1}
    # Heap of (count, tiebreak, symbols-in-subtree); lengths accumulate as
    # subtrees merge.
    lengths = {sym: 0 for sym in counts}
    heap = [(cnt, i, [sym]) for i, (sym, cnt) in enumerate(sorted(counts.items()))]
    heapq.heapify(heap)
    next_id = len(heap)
    while len(heap) > 1:
        c1, _, syms1 = heapq.heappop(heap)
        c2, _, syms2 = heapq.heappop(heap)
        for sym in syms1 + syms2:
            lengths[sym] += 1
        heapq.heappush(heap, (c1 + c2, next_id, syms1 + syms2))
        next_id += 1
    return lengths


def huffman_baseline(q: QuantIndexTensor) -> int:
    """Encoded size in bits under a canonical scalar Huffman code.

    Includes the table cost (see module docstring); comparison use only,
    nothing is actually encoded.
    """
    counts = Counter(q.indices.tolist())
    lengths = huffman_code_lengths(counts)
    payload = sum(counts[sym] * bits for sym, bits in lengths.items())
    table = len(counts) * HUFFMAN_TABLE_BITS_PER_SYMBOL
    return payload + table


def format_record(record: str, **fields) -> str:
    """One line-delimited report record: ``record key=value ...``."""
    parts = [record]
    for key, val in fields.items():
        if isinstance(val, float):
            parts.append(f"{key}={val:.6g}")
        else:
            parts.append(f"{key}={val}")
    return " ".join(parts)
