"""Whole-model encode/decode/sweep orchestration.

Layers are independent: contexts reset per layer and each layer owns its
payload, so a worker pool can encode layers (or whole sweep points)
concurrently.  Results are assembled in input order, which keeps output
bitstreams byte-identical regardless of the thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import fastpath, metrics
from .binarizer import QuantIndexTensor, min_remainder_bits
from .bitstream import LayerHeader, Model, serialize
from .ctxmodel import DEFAULT_ADAPTATION_SHIFT
from .ingest import CodableLayer, Role, TensorEntry
from .quantizer import QuantGrid, WeightStats, build_grid, dequantize

BYTES_PER_WEIGHT_FP32 = 4


@dataclass(frozen=True)
class EncodeParams:
    """All encoder knobs; defaults match the CLI's documented defaults."""

    lambda_: float = 0.01
    s: int = 64
    n: int = 4
    adaptation_shift: int = DEFAULT_ADAPTATION_SHIFT
    search_halfwidth: int = 2
    uniform_eta: bool = False
    grid_floor: Optional[float] = None  # absolute sigma_min when no sigma map
    threads: int = 1

    def __post_init__(self) -> None:
        if self.lambda_ < 0:
            raise ValueError("lambda must be >= 0")
        if self.s < 0:
            raise ValueError("S must be >= 0")
        if not 0 <= self.n <= 255:
            raise ValueError("n must be in 0..255")
        if self.search_halfwidth < 1:
            raise ValueError("search-halfwidth must be >= 1")
        if not 1 <= self.adaptation_shift <= 14:
            raise ValueError("adapt-shift must be in 1..14")
        if self.grid_floor is not None and not self.grid_floor > 0:
            raise ValueError("grid-floor must be > 0")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass
class LayerReport:
    name: str
    rows: int
    cols: int
    payload_bytes: int
    sparsity: float
    bits_per_weight: float
    ratio_percent: float
    distortion: float


@dataclass
class EncodeResult:
    model: Model
    reports: list[LayerReport] = field(default_factory=list)

    def to_bytes(self) -> bytes:
        return serialize(self.model)

    @property
    def original_bytes(self) -> int:
        return sum(h.rows * h.cols * BYTES_PER_WEIGHT_FP32 for h, _ in self.model)

    @property
    def total_distortion(self) -> float:
        return sum(r.distortion for r in self.reports)


def _layer_stats(layer: CodableLayer, params: EncodeParams) -> WeightStats:
    w_max = float(np.max(np.abs(layer.matrix.astype(np.float64)))) \
        if layer.matrix.size else 0.0
    if layer.sigma is not None:
        sigma_min = float(np.min(layer.sigma.astype(np.float64)))
    elif params.grid_floor is not None:
        sigma_min = params.grid_floor
    elif w_max > 0.0:
        sigma_min = w_max / 1024.0
    else:
        sigma_min = 1.0  # degenerate all-zero layer; any positive step works
    return WeightStats(w_max=w_max, sigma_min=sigma_min)


def encode_layer(layer: CodableLayer, params: EncodeParams) -> tuple[LayerHeader, bytes, LayerReport]:
    """Quantize and code one layer; contexts start fresh."""
    flat = layer.matrix.astype(np.float64).ravel()
    stats = _layer_stats(layer, params)
    grid = build_grid(stats, params.s)

    if layer.sigma is not None and not params.uniform_eta:
        etas = 1.0 / np.square(layer.sigma.astype(np.float64).ravel())
    else:
        etas = np.ones(flat.size, dtype=np.float64)

    rb_price = min_remainder_bits(grid.max_abs_index, params.n)
    indices = fastpath.rd_quantize(
        flat, etas, grid.delta, grid.max_abs_index, params.lambda_,
        params.search_halfwidth, params.n, rb_price, params.adaptation_shift)

    max_abs = int(np.max(np.abs(indices))) if indices.size else 0
    remainder_bits = min_remainder_bits(max_abs, params.n)
    payload = fastpath.encode_indices(indices, params.n, remainder_bits,
                                      params.adaptation_shift)

    rows, cols = layer.matrix.shape
    header = LayerHeader(
        name=layer.name, rows=rows, cols=cols, orig_shape=layer.orig_shape,
        delta=grid.delta, s=params.s, n_flags=params.n,
        remainder_bits=remainder_bits,
        adaptation_shift=params.adaptation_shift, payload_len=len(payload))

    q = QuantIndexTensor(rows, cols, indices)
    sigmas = None if (layer.sigma is None or params.uniform_eta) else layer.sigma
    original = flat.size * BYTES_PER_WEIGHT_FP32
    report = LayerReport(
        name=layer.name, rows=rows, cols=cols, payload_bytes=len(payload),
        sparsity=metrics.sparsity(q),
        bits_per_weight=len(payload) * 8.0 / flat.size,
        ratio_percent=metrics.compression_ratio(original, len(payload)).percent,
        distortion=metrics.weighted_distortion(flat, q, grid, sigmas))
    return header, payload, report


def encode_model(layers: Sequence[CodableLayer], params: EncodeParams) -> EncodeResult:
    """Encode every layer; layer order (and bytes) is input-deterministic."""
    if params.threads > 1 and len(layers) > 1:
        with ThreadPoolExecutor(max_workers=params.threads) as pool:
            results = list(pool.map(lambda la: encode_layer(la, params), layers))
    else:
        results = [encode_layer(layer, params) for layer in layers]
    out = EncodeResult(model=[])
    for header, payload, report in results:
        out.model.append((header, payload))
        out.reports.append(report)
    return out


def decode_model(model: Model) -> list[TensorEntry]:
    """Reconstruct dequantized weights with their original shapes."""
    entries: list[TensorEntry] = []
    for header, payload in model:
        indices = fastpath.decode_indices(
            payload, header.rows * header.cols, header.n_flags,
            header.remainder_bits, header.adaptation_shift)
        grid = QuantGrid(delta=header.delta, s=header.s,
                         max_abs_index=int(np.max(np.abs(indices))) if indices.size else 0)
        q = QuantIndexTensor(header.rows, header.cols, indices)
        matrix = dequantize(q, grid)
        entries.append(TensorEntry(name=header.name, role=Role.WEIGHT,
                                   data=matrix.reshape(header.orig_shape)))
    return entries


@dataclass
class SweepRow:
    s: int
    compressed_bytes: int
    distortion: float


@dataclass
class SweepResult:
    rows: list[SweepRow]
    best_s: int
    best_bytes: bytes


def sweep(layers: Sequence[CodableLayer], params: EncodeParams,
          s_values: Sequence[int]) -> SweepResult:
    """One full encode per S; returns every row plus the smallest output.

    Ties on size go to the smaller S.  Parallelism is across sweep points
    (each point encodes its layers serially), so row content does not
    depend on the thread count.
    """
    if not s_values:
        raise ValueError("empty S range")

    def encode_at(s: int) -> tuple[SweepRow, bytes]:
        point = EncodeParams(
            lambda_=params.lambda_, s=s, n=params.n,
            adaptation_shift=params.adaptation_shift,
            search_halfwidth=params.search_halfwidth,
            uniform_eta=params.uniform_eta, grid_floor=params.grid_floor,
            threads=1)
        result = encode_model(layers, point)
        blob = result.to_bytes()
        return SweepRow(s=s, compressed_bytes=len(blob),
                        distortion=result.total_distortion), blob

    if params.threads > 1:
        with ThreadPoolExecutor(max_workers=params.threads) as pool:
            encoded = list(pool.map(encode_at, s_values))
    else:
        encoded = [encode_at(s) for s in s_values]

    rows = [row for row, _ in encoded]
    best_i = min(range(len(rows)),
                 key=lambda i: (rows[i].compressed_bytes, rows[i].s))
    return SweepResult(rows=rows, best_s=rows[best_i].s,
                       best_bytes=encoded[best_i][1])
