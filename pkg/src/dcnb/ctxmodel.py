"""Adaptive binary probability models and their bit-cost query.

One model per regular-bin position, initialized at 0.5 and updated with a
shift-based exponential moving rule.  ``bit_cost`` prices a bin at the
model's current probability without mutating it; the quantizer uses it as
the rate term, so it must be cheap and deterministic across platforms.
"""

from __future__ import annotations

import math

from .bacore import PROB_HALF, PROB_MAX, PROB_MIN, PROB_ONE

DEFAULT_ADAPTATION_SHIFT = 4

COST_FRACTION_BITS = 8
COST_UNIT = 1 << COST_FRACTION_BITS  # cost of exactly 1.0 bits

# -log2 of the normalized probability mantissa m/128 for m in 64..128,
# in 1/256-bit units.  Probabilities are normalized into [0.5, 1.0) by a
# left shift; the shift count contributes whole bits.  65 nodes so the
# last 64-entry interval can be interpolated.
_COST_NODES = tuple(
    round(-math.log2((64 + j) / 128.0) * COST_UNIT) for j in range(65)
)


def cost_units(p_fixed: int) -> int:
    """-log2(p) in 1/256-bit units for a 15-bit fixed-point probability."""
    e = 15 - p_fixed.bit_length()
    m = p_fixed << e  # in [16384, 32768)
    idx = (m >> 8) - 64
    frac = m & 0xFF
    node = _COST_NODES[idx]
    return e * COST_UNIT + node + (((_COST_NODES[idx + 1] - node) * frac) >> 8)


class ContextModel:
    """Probability-of-one estimate as 15-bit fixed point, p1 in [1, 32767]."""

    __slots__ = ("p1", "adaptation_shift")

    def __init__(self, adaptation_shift: int = DEFAULT_ADAPTATION_SHIFT) -> None:
        if adaptation_shift < 1:
            raise ValueError("adaptation_shift must be >= 1")
        self.p1 = PROB_HALF
        self.adaptation_shift = adaptation_shift

    def update(self, observed: int) -> None:
        """Move p1 toward the observed bin; the clamp bounds are the fixed
        points of the update (the step never rounds to zero)."""
        if observed:
            step = (PROB_ONE - self.p1) >> self.adaptation_shift
            self.p1 += step if step else 1
            if self.p1 > PROB_MAX:
                self.p1 = PROB_MAX
        else:
            step = self.p1 >> self.adaptation_shift
            self.p1 -= step if step else 1
            if self.p1 < PROB_MIN:
                self.p1 = PROB_MIN

    def bit_cost(self, bin: int) -> float:
        """-log2(p(bin)) in fractional bits under the current state."""
        p = self.p1 if bin else PROB_ONE - self.p1
        return cost_units(p) / COST_UNIT

    def bit_cost_units(self, bin: int) -> int:
        """Same as :meth:`bit_cost` but in integer 1/256-bit units."""
        p = self.p1 if bin else PROB_ONE - self.p1
        return cost_units(p)

    def clone(self) -> "ContextModel":
        m = ContextModel(self.adaptation_shift)
        m.p1 = self.p1
        return m

    def __repr__(self) -> str:
        return f"ContextModel(p1={self.p1}, shift={self.adaptation_shift})"


class ContextSet:
    """The models for one layer: sig, sign, and one model per AbsGr flag."""

    __slots__ = ("sig", "sign", "gr")

    def __init__(self, n: int, adaptation_shift: int = DEFAULT_ADAPTATION_SHIFT) -> None:
        if n < 0:
            raise ValueError("flag count n must be >= 0")
        self.sig = ContextModel(adaptation_shift)
        self.sign = ContextModel(adaptation_shift)
        self.gr = [ContextModel(adaptation_shift) for _ in range(n)]

    @property
    def n(self) -> int:
        return len(self.gr)

    @property
    def adaptation_shift(self) -> int:
        return self.sig.adaptation_shift

    def clone_state(self) -> "ContextSet":
        """Deep copy; mutating the copy leaves the original untouched."""
        cs = ContextSet.__new__(ContextSet)
        cs.sig = self.sig.clone()
        cs.sign = self.sign.clone()
        cs.gr = [m.clone() for m in self.gr]
        return cs

    def p1_values(self) -> list[int]:
        """Current states as [sig, sign, gr1..grn]; used by tests and the
        fast-path equivalence checks."""
        return [self.sig.p1, self.sign.p1] + [m.p1 for m in self.gr]
