"""Weighted rate-distortion quantization onto an equidistant grid.

The grid step derives from the layer's largest weight magnitude, the
smallest per-weight standard deviation, and a coarseness integer S.  Each
weight then takes the index minimizing eta*(w - delta*I)^2 + lambda*R,
where R is the bit cost of I's bin string under the *current* context
models; the chosen string's updates are committed before the next weight,
so pricing follows the coder's causal structure (greedy, no lookahead).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .binarizer import QuantIndexTensor, min_remainder_bits
from .ctxmodel import COST_UNIT, DEFAULT_ADAPTATION_SHIFT, ContextSet


@dataclass(frozen=True)
class WeightStats:
    """Layer statistics the grid is built from."""

    w_max: float  # largest weight magnitude, >= 0
    sigma_min: float  # smallest standard deviation (or configured floor)

    def __post_init__(self) -> None:
        if not (self.w_max >= 0.0) or not math.isfinite(self.w_max):
            raise ValueError(f"w_max must be finite and >= 0, got {self.w_max}")
        if not (self.sigma_min > 0.0) or not math.isfinite(self.sigma_min):
            raise ValueError(f"sigma_min must be finite and > 0, got {self.sigma_min}")


@dataclass(frozen=True)
class QuantGrid:
    """Equidistant quantization points q = delta * I, |I| <= max_abs_index."""

    delta: float
    s: int
    max_abs_index: int


@dataclass(frozen=True)
class RdConfig:
    """Rate-distortion knobs shared by quantization and coding."""

    lambda_: float = 0.01
    search_halfwidth: int = 2
    n: int = 4
    adaptation_shift: int = DEFAULT_ADAPTATION_SHIFT
    uniform_eta: bool = False

    def __post_init__(self) -> None:
        if self.lambda_ < 0:
            raise ValueError("lambda must be >= 0")
        if self.search_halfwidth < 1:
            raise ValueError("search_halfwidth must be >= 1")
        if self.n < 0:
            raise ValueError("n must be >= 0")


def build_grid(stats: WeightStats, s: int) -> QuantGrid:
    """Step size from the two-sided weight span, sigma_min, and S.

    With S = 0 the step reduces to sigma_min; an all-zero layer gets a
    degenerate grid (delta = sigma_min, no indices) so downstream headers
    keep a positive step.
    """
    if s < 0:
        raise ValueError("S must be >= 0")
    w = abs(stats.w_max)
    if w == 0.0:
        return QuantGrid(delta=stats.sigma_min, s=s, max_abs_index=0)
    span = 2.0 * w
    delta = span / (span / stats.sigma_min + s)
    return QuantGrid(delta=delta, s=s, max_abs_index=int(math.ceil(w / delta)))


def _rate_units(k: int, n: int, remainder_bits: int, ctx: ContextSet) -> int:
    """Bit cost of index k's bin string in 1/256-bit units, frozen state."""
    if k == 0:
        return ctx.sig.bit_cost_units(0)
    units = ctx.sig.bit_cost_units(1)
    units += ctx.sign.bit_cost_units(1 if k < 0 else 0)
    mag = -k if k < 0 else k
    for j in range(1, n + 1):
        gt = 1 if mag > j else 0
        units += ctx.gr[j - 1].bit_cost_units(gt)
        if not gt:
            return units
    if mag > n:
        units += remainder_bits * COST_UNIT  # bypass bins cost 1.0 each
    return units


def _commit(k: int, n: int, ctx: ContextSet) -> None:
    """Apply the context updates of index k's bin string."""
    if k == 0:
        ctx.sig.update(0)
        return
    ctx.sig.update(1)
    ctx.sign.update(1 if k < 0 else 0)
    mag = -k if k < 0 else k
    for j in range(1, n + 1):
        gt = 1 if mag > j else 0
        ctx.gr[j - 1].update(gt)
        if not gt:
            return


def _nearest_index(x: float, max_abs_index: int) -> int:
    if x >= max_abs_index:
        return max_abs_index
    if x <= -max_abs_index:
        return -max_abs_index
    return int(math.floor(x + 0.5))


def rd_quantize_weight(w: float, eta: float, grid: QuantGrid, cfg: RdConfig,
                       ctx: ContextSet) -> int:
    """Pick the RD-optimal index for one weight and commit its updates.

    Candidates are the zero index plus the window of search_halfwidth
    around the nearest grid index, clipped to the grid bound.  Ties break
    toward smaller magnitude, then toward the nonnegative index.
    """
    if grid.max_abs_index == 0:
        _commit(0, cfg.n, ctx)
        return 0
    rb = min_remainder_bits(grid.max_abs_index, cfg.n)
    base = _nearest_index(w / grid.delta, grid.max_abs_index)
    lo = max(base - cfg.search_halfwidth, -grid.max_abs_index)
    hi = min(base + cfg.search_halfwidth, grid.max_abs_index)

    best_k = 0
    best_cost = eta * (w * w) + cfg.lambda_ * (
        _rate_units(0, cfg.n, rb, ctx) / 256.0)
    for k in range(lo, hi + 1):
        if k == 0:
            continue
        d = w - grid.delta * k
        cost = eta * (d * d) + cfg.lambda_ * (
            _rate_units(k, cfg.n, rb, ctx) / 256.0)
        if cost < best_cost or (cost == best_cost and _tie_wins(k, best_k)):
            best_cost = cost
            best_k = k
    _commit(best_k, cfg.n, ctx)
    return best_k


def _tie_wins(k: int, best: int) -> bool:
    ak, ab = abs(k), abs(best)
    return ak < ab or (ak == ab and k > best)


def rd_quantize_layer(
    weights: np.ndarray,
    sigmas: Optional[np.ndarray],
    grid: QuantGrid,
    cfg: RdConfig,
) -> tuple[QuantIndexTensor, ContextSet]:
    """Quantize a whole matrix in row-major order.

    Returns the index tensor and the committed context state, which is by
    construction the state the encoder will reproduce when it replays the
    same indices from fresh models.
    """
    w = np.asarray(weights)
    if w.ndim != 2:
        raise ValueError(f"expected a matrix, got rank {w.ndim}")
    if sigmas is not None and not cfg.uniform_eta:
        sg = np.asarray(sigmas)
        if sg.shape != w.shape:
            raise ValueError(
                f"sigma dims {sg.shape} do not match weight dims {w.shape}")
        if not np.all(sg > 0):
            raise ValueError("all sigma values must be > 0")
        etas = 1.0 / np.square(sg.astype(np.float64).ravel())
    else:
        etas = np.ones(w.size, dtype=np.float64)

    flat = w.astype(np.float64).ravel()
    ctx = ContextSet(cfg.n, cfg.adaptation_shift)
    out = np.empty(flat.size, dtype=np.int32)
    for i in range(flat.size):
        out[i] = rd_quantize_weight(float(flat[i]), float(etas[i]), grid,
                                    cfg, ctx)
    return QuantIndexTensor(w.shape[0], w.shape[1], out), ctx


def dequantize(q: QuantIndexTensor, grid: QuantGrid) -> np.ndarray:
    """Reconstruct the weight matrix as delta * I (float32, matrix form)."""
    vals = grid.delta * q.indices.astype(np.float64)
    return vals.astype(np.float32).reshape(q.rows, q.cols)
