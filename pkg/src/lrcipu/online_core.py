"""Cycle-level model of the LR composite inner-product unit.

Per input cycle the counter circuit reduces one column pair to a small
signed integer (a partial-product term), and a 6:2 compressor adds it to the
shifted partial-product row (PPR).  Every ``n`` cycles the completed row is
folded into the residual register and the PPR is cleared.  After ``n**2``
input cycles and ``delta_mult`` pipeline cycles the digit selector starts
emitting one MSDF output digit per cycle.

All register words may be Python ints (one unit) or int64 arrays (many
independent units stepped in lockstep, e.g. a PE grid).
"""

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np

from lrcipu import _words
from lrcipu._words import any_true, shr, wrap
from lrcipu.sdnum import BitColumn, FixedPointValue, OnTheFlyConverter, SignedDigitStream


@dataclass(frozen=True)
class CarrySavePair:
    sum: object
    carry: object
    width: int

    @classmethod
    def zero(cls, width, like=None):
        z = np.zeros_like(like) if _words.is_array(like) else 0
        return cls(z, z, width)

    @classmethod
    def of(cls, value, width):
        return cls(wrap(value, width), value * 0, width)

    @property
    def value(self):
        return wrap(self.sum + self.carry, self.width)

    def shifted(self):
        """Left shift by one position (both words)."""
        return CarrySavePair(wrap(self.sum << 1, self.width), wrap(self.carry << 1, self.width), self.width)


@dataclass(frozen=True)
class PartialProductTerm:
    value: object
    weight_exponent: int = 0


@dataclass(frozen=True)
class CipuConfig:
    """Static parameters of one composite unit.

    ``prescale`` divides the result by ``2**scale_exponent`` so that sums of
    ``k`` products stay inside the fractional output range; with
    ``prescale=False`` the caller must guarantee ``sum(|a*b|) < 1``.
    """

    n: int = 8
    k: int = 1
    delta_mult: int = 3
    prescale: bool = True

    def __post_init__(self):
        if self.n < 2 or self.k < 1 or self.delta_mult < 0:
            raise ValueError(f"invalid config {self}")

    @property
    def scale_exponent(self) -> int:
        # |sum| <= k, so 2**e > k is needed (k itself can be reached by -1 * -1)
        return self.k.bit_length() if self.prescale else 0

    @property
    def frac_bits(self) -> int:
        """Fractional bits of the exact result in output weight."""
        return 2 * self.n - 2 + self.scale_exponent

    @property
    def out_digits(self) -> int:
        return max(2 * self.n, self.frac_bits)

    @property
    def width(self) -> int:
        # 2n plus ceil(log2(2k+1)) guard bits for counter growth
        return 2 * self.n + (2 * self.k).bit_length()

    @property
    def input_cycles(self) -> int:
        return self.n * self.n

    @property
    def first_digit_cycle(self) -> int:
        return self.n * self.n + self.delta_mult

    @property
    def total_cycles(self) -> int:
        return self.first_digit_cycle + self.out_digits


@dataclass(frozen=True)
class CipuState:
    ppr: CarrySavePair
    residual: CarrySavePair
    # selection-stage working residual (output weight, frac_bits fractional bits)
    out_residual: CarrySavePair
    cycle: int = 0
    out_digits: tuple = ()
    converter: OnTheFlyConverter = field(default_factory=OnTheFlyConverter)

    @classmethod
    def initial(cls, cfg: CipuConfig, batch=None):
        """Reset state; ``batch`` is a shape for lockstep operation."""
        like = np.zeros(batch, dtype=np.int64) if batch is not None else None
        if like is not None and cfg.width > _words.MAX_ARRAY_WIDTH:
            raise ValueError(f"width {cfg.width} too large for lockstep arrays")
        z = CarrySavePair.zero(cfg.width, like)
        conv = OnTheFlyConverter(*(np.zeros_like(like) + v for v in (0, -1))) if like is not None else OnTheFlyConverter()
        return cls(ppr=z, residual=z, out_residual=z, converter=conv)


class CipuRun(NamedTuple):
    stream: SignedDigitStream
    first_digit_cycle: int
    total_cycles: int


def pp_term(a_col: BitColumn, b_col: BitColumn) -> PartialProductTerm:
    """Counter circuit: signed popcount of the aligned AND of two columns."""
    if len(a_col) != len(b_col):
        raise ValueError(f"column lengths differ: {len(a_col)} vs {len(b_col)}")
    a, b = a_col.bits, b_col.bits
    if _words.is_array(a) or _words.is_array(b):
        count = np.sum(np.asarray(a, dtype=np.int64) & np.asarray(b, dtype=np.int64), axis=-1)
    else:
        count = sum(x & y for x, y in zip(a, b))
    if a_col.signed_msb != b_col.signed_msb:
        count = -count
    return PartialProductTerm(count, -(a_col.position + b_col.position))


def _csa(x, y, z, width):
    s = x ^ y ^ z
    c = ((x & y) | (x & z) | (y & z)) << 1
    return wrap(s, width), wrap(c, width)


def compress_6_2(residual: CarrySavePair, ppr: CarrySavePair, term: CarrySavePair) -> CarrySavePair:
    """Add three carry-save operands into one, without carry propagation."""
    width = residual.width
    if ppr.width != width or term.width != width:
        raise ValueError("compressor operands must share a width")
    exact = residual.value + ppr.value + term.value
    half = 1 << (width - 1)
    if any_true((exact < -half) | (exact >= half)):
        raise OverflowError(f"compressor result exceeds {width}-bit range")
    s1, c1 = _csa(residual.sum, residual.carry, ppr.sum, width)
    s2, c2 = _csa(ppr.carry, term.sum, term.carry, width)
    s3, c3 = _csa(s1, c1, s2, width)
    s4, c4 = _csa(s3, c3, c2, width)
    return CarrySavePair(s4, c4, width)


def select_digit(estimate):
    """Radix-2 selection: +1 at or above 1/2, -1 at or below -1/2, else 0."""
    return (estimate >= 0.5) * 1 - (estimate <= -0.5) * 1


def _estimate_quarters(src: CarrySavePair, frac_bits):
    # leading window of 2*src with 2 fractional bits: truncate each word at
    # frac_bits-3 and add in a 5-bit-wide-enough adder
    m = frac_bits - 3
    return wrap(shr(src.sum, m) + shr(src.carry, m), src.width - m)


def cipu_step(state: CipuState, cfg: CipuConfig, a_col: BitColumn = None, b_col: BitColumn = None) -> CipuState:
    """Advance one clock cycle.

    During the first ``n**2`` cycles ``a_col`` holds digit ``i = c mod n + 1``
    of every A operand and ``b_col`` digit ``j = c div n + 1`` of every B
    operand, ``c`` being ``state.cycle``.  Afterwards columns are ignored.
    """
    c = state.cycle
    n = cfg.n
    if c >= cfg.total_cycles:
        raise RuntimeError("stepping a finished unit")
    if c < cfg.input_cycles:
        if a_col is None or b_col is None:
            raise ValueError(f"cycle {c} needs input columns")
        if len(a_col) != cfg.k:
            raise ValueError(f"expected columns of length {cfg.k}, got {len(a_col)}")
        term = CarrySavePair.of(pp_term(a_col, b_col).value, cfg.width)
        zero = CarrySavePair.zero(cfg.width, state.ppr.sum)
        if (c + 1) % n == 0:
            # row complete: residual enabled, PPR multiplexed to reset
            residual = compress_6_2(state.residual.shifted(), state.ppr.shifted(), term)
            return replace(state, ppr=zero, residual=residual, cycle=c + 1)
        # residual multiplexed out of the compressor, PPR enabled
        ppr = compress_6_2(zero, state.ppr.shifted(), term)
        return replace(state, ppr=ppr, cycle=c + 1)
    if c < cfg.first_digit_cycle:
        return replace(state, cycle=c + 1)
    src = state.residual if c == cfg.first_digit_cycle else state.out_residual
    d = select_digit(_estimate_quarters(src, cfg.frac_bits) / 4)
    sub = CarrySavePair.of(-d * (1 << cfg.frac_bits), cfg.width)
    zero = CarrySavePair.zero(cfg.width, src.sum)
    out_residual = compress_6_2(src.shifted(), zero, sub)
    return replace(
        state,
        out_residual=out_residual,
        cycle=c + 1,
        out_digits=state.out_digits + (d,),
        converter=state.converter.push(d),
    )


def columns(raw_a, raw_b, cfg: CipuConfig, cycle: int):
    """Operand columns consumed at ``cycle`` (raw operands along the last axis)."""
    i = cycle % cfg.n + 1
    j = cycle // cfg.n + 1
    return BitColumn.from_raws(raw_a, cfg.n, i), BitColumn.from_raws(raw_b, cfg.n, j)


def _check_range(raw_a, raw_b, cfg):
    if cfg.prescale:
        return
    total = sum(abs(int(a) * int(b)) for a, b in zip(raw_a, raw_b))
    if Fraction(total, 1 << (2 * cfg.n - 2)) >= 1:
        raise ValueError("sum of |A_k * B_k| >= 1 without prescale")


def _run(raw_a, raw_b, cfg, trace=None):
    state = CipuState.initial(cfg, raw_a.shape[:-1] if _words.is_array(raw_a) else None)
    first = None
    while state.cycle < cfg.total_cycles:
        if state.cycle < cfg.input_cycles:
            nxt = cipu_step(state, cfg, *columns(raw_a, raw_b, cfg, state.cycle))
        else:
            nxt = cipu_step(state, cfg)
        if first is None and nxt.out_digits:
            first = state.cycle
        state = nxt
        if trace is not None:
            trace.append(state)
    return state, first


def cipu_run(A: Sequence[FixedPointValue], B: Sequence[FixedPointValue], cfg: CipuConfig, trace=None) -> CipuRun:
    """Run one composite unit to completion on ``k`` operand pairs.

    The returned stream reconstructs exactly to ``sum(A[i] * B[i])``; its
    ``scale`` is ``cfg.scale_exponent``.  If ``trace`` is a list, every
    post-cycle state is appended to it.
    """
    if len(A) != cfg.k or len(B) != cfg.k:
        raise ValueError(f"expected {cfg.k} operand pairs, got {len(A)} and {len(B)}")
    for v in (*A, *B):
        if v.n != cfg.n:
            raise ValueError(f"operand width {v.n} != n={cfg.n}")
    raw_a = tuple(v.raw for v in A)
    raw_b = tuple(v.raw for v in B)
    _check_range(raw_a, raw_b, cfg)
    state, first = _run(raw_a, raw_b, cfg, trace)
    return CipuRun(SignedDigitStream(state.out_digits, scale=cfg.scale_exponent), first, state.cycle)


def cipu_run_batch(raw_a, raw_b, cfg: CipuConfig):
    """Run many independent units in lockstep.

    ``raw_a`` and ``raw_b`` are integer arrays of shape ``(..., k)``.  Returns
    the final state (array-valued words) and the measured first-digit cycle.
    Output digits are stacked along the last axis of ``state.out_digits``.
    """
    raw_a = np.asarray(raw_a, dtype=np.int64)
    raw_b = np.asarray(raw_b, dtype=np.int64)
    if raw_a.shape != raw_b.shape or raw_a.shape[-1] != cfg.k:
        raise ValueError(f"operand arrays must both have shape (..., {cfg.k})")
    if not cfg.prescale:
        mag = np.sum(np.abs(raw_a * raw_b), axis=-1)
        if np.any(mag >= 1 << (2 * cfg.n - 2)):
            raise ValueError("sum of |A_k * B_k| >= 1 without prescale")
    return _run(raw_a, raw_b, cfg)


def batch_digits(state: CipuState):
    """Digits of a lockstep state as an array of shape ``(..., out_digits)``."""
    return np.stack(state.out_digits, axis=-1)


def online_multiply(a: FixedPointValue, b: FixedPointValue, cfg: CipuConfig = None) -> SignedDigitStream:
    if cfg is None:
        cfg = CipuConfig(n=a.n, k=1)
    if cfg.k != 1:
        raise ValueError("online_multiply needs k=1")
    return cipu_run([a], [b], cfg).stream
