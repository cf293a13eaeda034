"""Binary arithmetic coding engine (byte-oriented range coder).

Encodes one binary decision (bin) at a time, either as a *regular* bin
under a caller-supplied probability, or as a *bypass* bin at fixed 50%.

Layout: 32-bit ``low`` accumulator, 16-bit ``range`` register.  The range
is renormalized a byte at a time; carry propagation into already-settled
output is resolved with the classic cache byte plus a run counter for
pending 0xFF bytes.  Probabilities are 15-bit fixed point (1..32767 out
of 32768), clamped away from 0 and 1 so every bin stays decodable.

Bit order inside each payload byte is most-significant-bit first.  The
payload is bit-exact: a decoder fed the same probability schedule
reproduces the encoded bins exactly.
"""

from __future__ import annotations

PROB_BITS = 15
PROB_ONE = 1 << PROB_BITS  # fixed-point 1.0 (32768)
PROB_HALF = PROB_ONE >> 1  # fixed-point 0.5 (16384)
PROB_MIN = 1
PROB_MAX = PROB_ONE - 1

RANGE_FULL = 1 << 16
RANGE_BOTTOM = 1 << 8  # renormalize (emit a byte) while range < this

_LOW_MASK = 0xFFFF


class CoderStateError(RuntimeError):
    """Operation on an encoder that has already been terminated."""


class PayloadTruncatedError(ValueError):
    """Decoder needed bytes past the end of its payload."""


def prob_to_fixed(p1: float) -> int:
    """Convert a float probability-of-one to 15-bit fixed point.

    Clamps into [PROB_MIN, PROB_MAX]; NaN maps to 0.5.
    """
    if p1 != p1:
        return PROB_HALF
    f = int(p1 * PROB_ONE + 0.5)
    if f < PROB_MIN:
        return PROB_MIN
    if f > PROB_MAX:
        return PROB_MAX
    return f


def _split(rng: int, p1: int) -> int:
    """Width of the '1' subinterval; clamped so both halves are nonempty."""
    r1 = (rng * p1) >> PROB_BITS
    if r1 < 1:
        return 1
    if r1 > rng - 1:
        return rng - 1
    return r1


class ArithEncoder:
    """Single-owner, mutable range encoder.

    The '1' symbol occupies the upper part of the interval.  ``terminate``
    flushes the low register through the carry cache so the payload is
    self-contained given the bin/probability schedule.
    """

    __slots__ = ("low", "range", "pending_bytes", "_cache", "_cache_filled",
                 "_out", "_closed")

    def __init__(self) -> None:
        self.low = 0
        self.range = RANGE_FULL
        # Run length of emitted-but-carry-unresolved 0xFF bytes.
        self.pending_bytes = 0
        self._cache = 0
        self._cache_filled = False
        self._out = bytearray()
        self._closed = False

    def __len__(self) -> int:
        """Bytes emitted so far (non-decreasing across encode calls)."""
        return len(self._out)

    def _shift_low(self) -> None:
        # low < 2**17 always holds: low + range <= 2**17 is an invariant
        # of the subdivision, so bit 16 is the carry.
        if self.low < 0xFF00 or self.low >= 0x10000:
            carry = self.low >> 16
            if self._cache_filled:
                self._out.append((self._cache + carry) & 0xFF)
            if self.pending_bytes:
                fill = (0xFF + carry) & 0xFF
                self._out.extend((fill,) * self.pending_bytes)
                self.pending_bytes = 0
            self._cache = (self.low >> 8) & 0xFF
            self._cache_filled = True
        else:
            # Staged byte is 0xFF with no carry yet: resolution must wait.
            self.pending_bytes += 1
        self.low = (self.low << 8) & _LOW_MASK

    def _check_open(self) -> None:
        if self._closed:
            raise CoderStateError("encoder already terminated")

    def encode_bin(self, bin: int, p1: int) -> None:
        """Encode one bin given P(bin=1) as 15-bit fixed point."""
        self._check_open()
        if not PROB_MIN <= p1 <= PROB_MAX:
            raise ValueError(f"p1 out of range [1, {PROB_MAX}]: {p1}")
        r1 = _split(self.range, p1)
        if bin:
            self.low += self.range - r1
            self.range = r1
        else:
            self.range -= r1
        while self.range < RANGE_BOTTOM:
            self._shift_low()
            self.range <<= 8

    def encode_bypass(self, bin: int) -> None:
        """Encode one bin at fixed 50% (one bit of code length per call)."""
        self._check_open()
        r1 = self.range >> 1
        if bin:
            self.low += self.range - r1
            self.range = r1
        else:
            self.range -= r1
        while self.range < RANGE_BOTTOM:
            self._shift_low()
            self.range <<= 8

    def terminate(self) -> bytes:
        """Flush the low register and return the finished payload.

        Three byte shifts push both 16-bit window bytes (and the cache)
        out, which pins the decoder's value to the final interval's low
        end; the decoder then consumes exactly the emitted bytes.
        """
        self._check_open()
        self._closed = True
        for _ in range(3):
            self._shift_low()
        return bytes(self._out)


class ArithDecoder:
    """Mirror of :class:`ArithEncoder` over a finished payload.

    Raises :class:`PayloadTruncatedError` when a decode needs bytes the
    payload does not have; a well-formed payload is consumed exactly.
    """

    __slots__ = ("value", "range", "_data", "_pos")

    def __init__(self, payload: bytes) -> None:
        self._data = bytes(payload)
        self._pos = 0
        self.range = RANGE_FULL
        self.value = (self._read_byte() << 8) | self._read_byte()

    @property
    def position(self) -> int:
        """Bytes consumed from the payload so far."""
        return self._pos

    def _read_byte(self) -> int:
        if self._pos >= len(self._data):
            raise PayloadTruncatedError(
                f"payload exhausted at byte {self._pos}")
        b = self._data[self._pos]
        self._pos += 1
        return b

    def decode_bin(self, p1: int) -> int:
        """Decode one bin; p1 must match the value used at encode time."""
        if not PROB_MIN <= p1 <= PROB_MAX:
            raise ValueError(f"p1 out of range [1, {PROB_MAX}]: {p1}")
        r1 = _split(self.range, p1)
        r0 = self.range - r1
        if self.value >= r0:
            bin = 1
            self.value -= r0
            self.range = r1
        else:
            bin = 0
            self.range = r0
        while self.range < RANGE_BOTTOM:
            self.value = (self.value << 8) | self._read_byte()
            self.range <<= 8
        return bin

    def decode_bypass(self) -> int:
        """Decode one bypass (fixed 50%) bin."""
        r1 = self.range >> 1
        r0 = self.range - r1
        if self.value >= r0:
            bin = 1
            self.value -= r0
            self.range = r1
        else:
            bin = 0
            self.range = r0
        while self.range < RANGE_BOTTOM:
            self.value = (self.value << 8) | self._read_byte()
            self.range <<= 8
        return bin
