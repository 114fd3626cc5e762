import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lrcipu.online_core import (
    CarrySavePair,
    CipuConfig,
    CipuState,
    batch_digits,
    cipu_run,
    cipu_run_batch,
    cipu_step,
    compress_6_2,
    online_multiply,
    pp_term,
    select_digit,
)
from lrcipu.sdnum import BitColumn, FixedPointValue, quantize, reconstruct


def fp(raw, n=8):
    return FixedPointValue(raw, n)


def dot_oracle(ra, rb, n):
    return Fraction(sum(a * b for a, b in zip(ra, rb)), 1 << (2 * n - 2))


# -- counter circuit ---------------------------------------------------------

def test_pp_term_examples():
    assert pp_term(BitColumn((1, 0, 1)), BitColumn((1, 1, 1))).value == 2
    assert pp_term(BitColumn((0, 0, 0)), BitColumn((1, 1, 1))).value == 0
    assert pp_term(BitColumn((1, 1), signed_msb=True), BitColumn((1, 0))).value == -1


def test_pp_term_sign_composes():
    a = BitColumn((1, 1, 0), signed_msb=True)
    b = BitColumn((1, 1, 1), signed_msb=True)
    assert pp_term(a, b).value == 2


def test_pp_term_length_mismatch():
    with pytest.raises(ValueError):
        pp_term(BitColumn((1, 0)), BitColumn((1,)))


@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=80),
       st.booleans(), st.booleans())
def test_pp_term_matches_signed_dot(pairs, sa, sb):
    a, b = zip(*pairs)
    sign = -1 if sa != sb else 1
    assert pp_term(BitColumn(a, sa), BitColumn(b, sb)).value == sign * sum(x * y for x, y in pairs)


# -- compressor ---------------------------------------------------------------

W = 20


def test_compress_examples():
    z = CarrySavePair.zero(W)
    assert compress_6_2(z, z, z).value == 0
    assert compress_6_2(z, z, CarrySavePair.of(5, W)).value == 5


def _random_pair(rng, value, width):
    # arbitrary split of value into two modular words
    s = rng.randrange(-(1 << (width - 1)), 1 << (width - 1))
    from lrcipu._words import wrap
    return CarrySavePair(s, wrap(value - s, width), width)


def test_compress_random_against_wide_int():
    rng = random.Random(7)
    lim = 1 << (W - 1)
    for _ in range(5000):
        vals = [rng.randrange(-lim // 3, lim // 3) for _ in range(3)]
        pairs = [_random_pair(rng, v, W) for v in vals]
        out = compress_6_2(*pairs)
        assert out.value == sum(vals)
        assert -lim <= out.sum < lim and -lim <= out.carry < lim


def test_compress_overflow():
    big = CarrySavePair.of((1 << (W - 1)) - 1, W)
    with pytest.raises(OverflowError):
        compress_6_2(big, CarrySavePair.of(1, W), CarrySavePair.zero(W))
    with pytest.raises(ValueError):
        compress_6_2(big, CarrySavePair.zero(W + 1), CarrySavePair.zero(W))


# -- selection ----------------------------------------------------------------

@pytest.mark.parametrize("est, d", [(0.75, 1), (0.25, 0), (-0.5, -1), (0.5, 1), (-0.25, 0), (-1.75, -1)])
def test_select_digit(est, d):
    assert select_digit(est) == d


def test_select_digit_array():
    est = np.array([-1.0, -0.5, -0.25, 0.0, 0.25, 0.5, 1.75])
    assert select_digit(est).tolist() == [-1, -1, 0, 0, 0, 1, 1]


# -- stepping -----------------------------------------------------------------

def test_step_zero_columns_stays_zero():
    cfg = CipuConfig(n=4, k=3)
    s0 = CipuState.initial(cfg)
    s1 = cipu_step(s0, cfg, BitColumn((0, 0, 0), True), BitColumn((0, 0, 0), True))
    assert s1.cycle == 1
    assert s1.ppr.value == 0 and s1.residual.value == 0 and s1.out_digits == ()


def test_step_requires_columns_and_refuses_finished():
    cfg = CipuConfig(n=2, k=1, delta_mult=0)
    with pytest.raises(ValueError):
        cipu_step(CipuState.initial(cfg), cfg)
    trace = []
    cipu_run([fp(1, 2)], [fp(1, 2)], cfg, trace=trace)
    with pytest.raises(RuntimeError):
        cipu_step(trace[-1], cfg)


def test_half_times_half_n2():
    cfg = CipuConfig(n=2, k=1)
    run = cipu_run([quantize(0.5, 2)], [quantize(0.5, 2)], cfg)
    assert reconstruct(run.stream) == Fraction(1, 4)


def test_cipu_run_examples():
    cfg = CipuConfig(n=8, k=2)
    A = [quantize(0.5, 8), quantize(0.25, 8)]
    B = [quantize(0.5, 8), quantize(0.5, 8)]
    run = cipu_run(A, B, cfg)
    assert reconstruct(run.stream) == Fraction(3, 8)
    assert run.first_digit_cycle == 67
    assert run.total_cycles == cfg.total_cycles

    zero = cipu_run([fp(0)] * 2, B, cfg)
    assert reconstruct(zero.stream) == 0
    assert zero.first_digit_cycle == 8 * 8 + 3


def test_digit_count_is_2n_when_no_extra_scaling_needed():
    for k in (1, 2, 3):
        cfg = CipuConfig(n=8, k=k)
        run = cipu_run([fp(5)] * k, [fp(-7)] * k, cfg)
        assert len(run.stream) == 16


def test_unscaled_mode():
    cfg = CipuConfig(n=8, k=2, prescale=False)
    run = cipu_run([quantize(0.5, 8), quantize(0.25, 8)], [quantize(0.5, 8)] * 2, cfg)
    assert run.stream.scale == 0 and len(run.stream) == 16
    assert reconstruct(run.stream) == Fraction(3, 8)
    with pytest.raises(ValueError):
        cipu_run([fp(-128)] * 2, [fp(-128)] * 2, cfg)


def test_operand_checks():
    cfg = CipuConfig(n=8, k=2)
    with pytest.raises(ValueError):
        cipu_run([fp(1)], [fp(1)], cfg)
    with pytest.raises(ValueError):
        cipu_run([fp(1, 4)] * 2, [fp(1, 4)] * 2, cfg)
    with pytest.raises(ValueError):
        online_multiply(fp(1), fp(1), cfg)


def test_online_multiply_examples():
    assert reconstruct(online_multiply(quantize(0.5, 8), quantize(0.5, 8))) == Fraction(1, 4)
    assert reconstruct(online_multiply(fp(0), fp(-77))) == 0
    assert reconstruct(online_multiply(fp(-128), fp(-128))) == 1


def test_online_multiply_exhaustive_n4():
    cfg = CipuConfig(n=4, k=1)
    for a in range(-8, 8):
        for b in range(-8, 8):
            s = online_multiply(fp(a, 4), fp(b, 4), cfg)
            assert reconstruct(s) == Fraction(a * b, 64)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([2, 3, 4, 6, 8]), st.integers(1, 20), st.integers(0, 4), st.data())
def test_exact_dot_product_property(n, k, dm, data):
    lim = 1 << (n - 1)
    ra = data.draw(st.lists(st.integers(-lim, lim - 1), min_size=k, max_size=k))
    rb = data.draw(st.lists(st.integers(-lim, lim - 1), min_size=k, max_size=k))
    cfg = CipuConfig(n=n, k=k, delta_mult=dm)
    run = cipu_run([fp(x, n) for x in ra], [fp(x, n) for x in rb], cfg)
    assert reconstruct(run.stream) == dot_oracle(ra, rb, n)
    assert run.first_digit_cycle == n * n + dm


def test_batch_matches_scalar():
    rng = np.random.default_rng(3)
    cfg = CipuConfig(n=6, k=9, delta_mult=2)
    a = rng.integers(-32, 32, size=(4, 5, 9))
    b = rng.integers(-32, 32, size=(4, 5, 9))
    state, first = cipu_run_batch(a, b, cfg)
    digits = batch_digits(state)
    assert digits.shape == (4, 5, cfg.out_digits)
    assert first == cfg.first_digit_cycle
    for idx in np.ndindex(4, 5):
        run = cipu_run([fp(int(x), 6) for x in a[idx]], [fp(int(x), 6) for x in b[idx]], cfg)
        assert run.stream.digits == tuple(int(d) for d in digits[idx])


def _random_trace(rng, n, k, dm):
    cfg = CipuConfig(n=n, k=k, delta_mult=dm)
    lim = 1 << (n - 1)
    ra = [rng.randrange(-lim, lim) for _ in range(k)]
    rb = [rng.randrange(-lim, lim) for _ in range(k)]
    trace = []
    cipu_run([fp(x, n) for x in ra], [fp(x, n) for x in rb], cfg, trace=trace)
    return cfg, ra, rb, trace


def test_carry_save_soundness_replay():
    rng = random.Random(11)
    for _ in range(30):
        n, k = rng.choice([2, 4, 8]), rng.randint(1, 12)
        cfg, ra, rb, trace = _random_trace(rng, n, k, 3)
        # exact replay of the accumulation schedule with plain integers
        ppr = res = 0
        for c, st_ in enumerate(trace[: n * n]):
            i, j = c % n + 1, c // n + 1
            term = 0
            for a, b in zip(ra, rb):
                ai, bj = (a >> (n - i)) & 1, (b >> (n - j)) & 1
                term += ai * bj * (-1 if (i == 1) != (j == 1) else 1)
            if (c + 1) % n == 0:
                res, ppr = 2 * res + 2 * ppr + term, 0
            else:
                ppr = 2 * ppr + term
            assert st_.ppr.value == ppr and st_.residual.value == res
        assert res == sum(a * b for a, b in zip(ra, rb))


def test_residual_bound_every_cycle():
    rng = random.Random(5)
    for _ in range(40):
        cfg, _, _, trace = _random_trace(rng, rng.choice([2, 4, 8]), rng.choice([1, 9, 72]), 3)
        bound = 1 << cfg.frac_bits
        for st_ in trace:
            assert abs(st_.out_residual.value) < bound
        assert abs(trace[cfg.first_digit_cycle - 1].residual.value) < bound
        assert trace[-1].out_residual.value == 0


def test_schedule_discipline_example():
    rng = random.Random(2)
    cfg, _, _, trace = _random_trace(rng, 4, 5, 3)
    prev = CipuState.initial(cfg)
    for st_ in trace:
        if st_.cycle % cfg.n == 0:
            assert st_.ppr.value == 0
        else:
            assert st_.residual == prev.residual
        prev = st_


def test_pp_term_weight_exponent():
    a = BitColumn.from_raws((3, -2), 4, 2)
    b = BitColumn.from_raws((1, 5), 4, 4)
    term = pp_term(a, b)
    assert term.weight_exponent == -6
    assert term.value == 0 * 1 + 1 * 1
