"""Number formats: fractional two's-complement fixed point and MSDF
signed-digit streams.

Fixed-point operands hold ``raw / 2**(n-1)`` in ``[-1, 1)``.  Digit streams
are radix 2 with digits in ``{-1, 0, 1}``; digit ``i`` (1-based) weighs
``2**-i`` and the whole stream is multiplied by ``2**scale``.
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from lrcipu._words import any_true, where

DIGITS = (-1, 0, 1)


@dataclass(frozen=True)
class FixedPointValue:
    raw: int
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"bit width must be >= 1, got {self.n}")
        lo, hi = -(1 << (self.n - 1)), (1 << (self.n - 1)) - 1
        if not lo <= self.raw <= hi:
            raise ValueError(f"raw {self.raw} outside [{lo}, {hi}] for n={self.n}")

    @property
    def value(self) -> Fraction:
        return Fraction(self.raw, 1 << (self.n - 1))

    def bits(self) -> tuple:
        """Two's-complement bits, sign bit first."""
        return tuple((self.raw >> (self.n - i)) & 1 for i in range(1, self.n + 1))


@dataclass(frozen=True)
class SignedDigitStream:
    digits: tuple
    scale: int = 0

    def __post_init__(self):
        object.__setattr__(self, "digits", tuple(int(d) for d in self.digits))
        bad = [d for d in self.digits if d not in DIGITS]
        if bad:
            raise ValueError(f"digits outside {{-1, 0, 1}}: {bad[:4]}")

    def __len__(self):
        return len(self.digits)

    def __iter__(self):
        return iter(self.digits)


@dataclass(frozen=True)
class BitColumn:
    """One digit position taken across the ``k`` operands of a composite unit.

    ``bits`` is a tuple of 0/1 for a single unit, or an integer array of shape
    ``(..., k)`` when many units are stepped in lockstep.  ``signed_msb`` marks
    the two's-complement sign position, whose weight is negative.
    ``position`` is the 1-based digit index when known (0 otherwise).
    """

    bits: object
    signed_msb: bool = False
    position: int = 0

    def __post_init__(self):
        if isinstance(self.bits, np.ndarray):
            if np.any((self.bits != 0) & (self.bits != 1)):
                raise ValueError("column entries must be 0 or 1")
        else:
            object.__setattr__(self, "bits", tuple(int(b) for b in self.bits))
            if any(b not in (0, 1) for b in self.bits):
                raise ValueError("column entries must be 0 or 1")

    def __len__(self):
        return self.bits.shape[-1] if isinstance(self.bits, np.ndarray) else len(self.bits)

    @classmethod
    def from_raws(cls, raws, n, position):
        """Column ``position`` (1 = sign bit) of ``n``-bit raw operands."""
        if not 1 <= position <= n:
            raise ValueError(f"position {position} outside 1..{n}")
        if isinstance(raws, np.ndarray):
            bits = (raws >> (n - position)) & 1
        else:
            bits = tuple((int(r) >> (n - position)) & 1 for r in raws)
        return cls(bits, signed_msb=(position == 1), position=position)


def quantize(x, n: int) -> FixedPointValue:
    """Round ``x`` to the nearest ``n``-bit fraction, ties to even."""
    if n < 2:
        raise ValueError(f"bit width must be >= 2, got {n}")
    if not -1 <= x < 1:
        raise ValueError(f"{x} outside [-1, 1)")
    # round() on float/Fraction already rounds half to even; the scaling is exact
    raw = round(x * (1 << (n - 1)))
    raw = max(-(1 << (n - 1)), min((1 << (n - 1)) - 1, raw))
    return FixedPointValue(int(raw), n)


def to_digit_stream(v: FixedPointValue) -> SignedDigitStream:
    """MSDF digits of ``v``.

    The sign bit becomes a digit in ``{-1, 0}`` and the remaining bits follow
    unchanged.  Under weights ``2**-i`` that string is worth ``v / 2``, so the
    stream carries ``scale=1``; this keeps ``-1`` representable.
    """
    bits = v.bits()
    return SignedDigitStream((-bits[0],) + bits[1:], scale=1)


def reconstruct(s: SignedDigitStream) -> Fraction:
    length = len(s.digits)
    num = 0
    for d in s.digits:
        num = 2 * num + d
    return Fraction(num, 1 << length) * Fraction(2) ** s.scale


@dataclass(frozen=True)
class OnTheFlyConverter:
    """Incremental redundant-to-conventional conversion.

    Holds two candidate prefixes, ``q`` (the converted value so far, in units
    of ``2**-count``) and ``qm = q - 1``.  Each digit only appends to one of
    them, so earlier digits are never revisited.  Fields may be arrays for
    lockstep use.
    """

    q: object = 0
    qm: object = -1
    count: int = 0

    def push(self, d) -> "OnTheFlyConverter":
        if any_true((d < -1) | (d > 1)):
            raise ValueError("digit outside {-1, 0, 1}")
        q = where(d >= 0, 2 * self.q + d, 2 * self.qm + 2 + d)
        qm = where(d > 0, 2 * self.q + d - 1, 2 * self.qm + 1 + d)
        return OnTheFlyConverter(q, qm, self.count + 1)

    @property
    def value(self) -> Fraction:
        return Fraction(int(self.q), 1 << self.count)


def on_the_fly_convert(s: SignedDigitStream, n: int = None) -> FixedPointValue:
    """Convert ``s`` to an ``n``-bit fixed-point value, truncating toward zero.

    ``n`` defaults to ``len(s) + 1``, which is always exact for an unscaled
    stream.
    """
    if n is None:
        n = len(s) + 1
    if len(s) > 2 * n:
        raise ValueError(f"stream of {len(s)} digits too long for n={n}")
    conv = OnTheFlyConverter()
    for d in s.digits:
        conv = conv.push(d)
    q = conv.q << s.scale if s.scale >= 0 else conv.q
    frac_bits = conv.count - min(s.scale, 0)
    shift = frac_bits - (n - 1)
    if shift >= 0:
        raw = q >> shift if q >= 0 else -((-q) >> shift)
    else:
        raw = q << -shift
    return FixedPointValue(raw, n)
