"""Tile-level accelerator simulator.

An ``T_r x T_c`` grid of PEs (times ``T_m`` output channels) is loaded with
one work unit at a time: each PE computes the sum of products over a
``k x k`` window and ``T_n`` input channels with one composite
inner-product unit.  All PEs of a pass are stepped in lockstep.

Tensors are integer ndarrays of raw fixed-point values: inputs are
``(N, H, W)``, weights ``(M, N, k, k)``.  Outputs are exact integer sums of
raw products, i.e. real values scaled by ``2**(2*(n-1))``.
"""

import math
from dataclasses import dataclass, field
from typing import Iterator, List, NamedTuple, Optional

import numpy as np

from lrcipu.online_core import CipuConfig, CipuState, cipu_step, columns


@dataclass(frozen=True)
class LayerShape:
    """Convolution layer geometry; ``R`` and ``C`` are output rows/columns."""

    name: str
    R: int
    C: int
    N: int
    M: int
    k: int
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        for f in ("R", "C", "N", "M", "k", "stride"):
            if getattr(self, f) < 1:
                raise ValueError(f"{self.name}: {f} must be >= 1")
        if self.padding < 0:
            raise ValueError(f"{self.name}: padding must be >= 0")
        if self.in_rows < 1 or self.in_cols < 1:
            raise ValueError(f"{self.name}: padding too large for kernel")

    @property
    def in_rows(self) -> int:
        return (self.R - 1) * self.stride + self.k - 2 * self.padding

    @property
    def in_cols(self) -> int:
        return (self.C - 1) * self.stride + self.k - 2 * self.padding


@dataclass(frozen=True)
class TileConfig:
    T_n: int = 8
    T_r: int = 8
    T_c: int = 8
    T_m: int = 1

    def __post_init__(self):
        if min(self.T_n, self.T_r, self.T_c, self.T_m) < 1:
            raise ValueError(f"tile sizes must be >= 1: {self}")

    @property
    def pes(self) -> int:
        return self.T_r * self.T_c


class WorkUnit(NamedTuple):
    m0: int
    tile: int
    ch0: int


@dataclass(frozen=True)
class Schedule:
    layer: LayerShape
    tile: TileConfig
    out_groups: int
    spatial_tiles: int
    channel_groups: int

    def __iter__(self) -> Iterator[WorkUnit]:
        t = self.tile
        for mg in range(self.out_groups):
            for s in range(self.spatial_tiles):
                for g in range(self.channel_groups):
                    yield WorkUnit(mg * t.T_m, s, g * t.T_n)

    def __len__(self):
        return self.out_groups * self.spatial_tiles * self.channel_groups


def schedule_layer(layer: LayerShape, tile: TileConfig = TileConfig()) -> Schedule:
    """Loop nest over output-channel groups, spatial tiles, channel groups.

    Spatial tiles cover the row-major flattened output map in chunks of
    ``T_r * T_c`` pixels, so their count is ``ceil(R*C / (T_r*T_c))``.
    """
    return Schedule(
        layer,
        tile,
        out_groups=math.ceil(layer.M / tile.T_m),
        spatial_tiles=math.ceil(layer.R * layer.C / tile.pes),
        channel_groups=math.ceil(layer.N / tile.T_n),
    )


def _check_dims(layer, inputs, weights):
    want_in = (layer.N, layer.in_rows, layer.in_cols)
    want_w = (layer.M, layer.N, layer.k, layer.k)
    if tuple(inputs.shape) != want_in:
        raise ValueError(f"{layer.name}: input shape {inputs.shape} != {want_in}")
    if tuple(weights.shape) != want_w:
        raise ValueError(f"{layer.name}: weight shape {weights.shape} != {want_w}")


def reference_conv(layer: LayerShape, inputs, weights) -> np.ndarray:
    """Exact integer convolution with zero padding, shape ``(M, R, C)``."""
    inputs = np.asarray(inputs, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.int64)
    _check_dims(layer, inputs, weights)
    p, s, k = layer.padding, layer.stride, layer.k
    x = np.pad(inputs, ((0, 0), (p, p), (p, p)))
    out = np.zeros((layer.M, layer.R, layer.C), dtype=np.int64)
    for kh in range(k):
        for kw in range(k):
            patch = x[:, kh : kh + s * layer.R : s, kw : kw + s * layer.C : s]
            out += np.einsum("mn,nrc->mrc", weights[:, :, kh, kw], patch)
    return out


def _windows(layer: LayerShape, inputs, n_pad):
    """Per-pixel input windows, shape ``(R*C, n_pad, k, k)``, zero-filled."""
    p, s, k = layer.padding, layer.stride, layer.k
    x = np.zeros((n_pad, layer.in_rows + 2 * p, layer.in_cols + 2 * p), dtype=np.int64)
    x[: layer.N, p : p + layer.in_rows, p : p + layer.in_cols] = inputs
    win = np.empty((layer.R, layer.C, n_pad, k, k), dtype=np.int64)
    for kh in range(k):
        for kw in range(k):
            win[:, :, :, kh, kw] = x[:, kh : kh + s * layer.R : s, kw : kw + s * layer.C : s].transpose(1, 2, 0)
    return win.reshape(layer.R * layer.C, n_pad, k, k)


@dataclass
class LayerResult:
    output: np.ndarray
    cycles: int
    scale_exponent: int
    passes: int = 0


def _pe_config(layer, tile, cfg):
    return CipuConfig(n=cfg.n, k=layer.k * layer.k * tile.T_n, delta_mult=cfg.delta_mult, prescale=True)


def _run_pass(pe_cfg, a, b):
    """Step one PE-grid pass; returns (sums, charged cycles).

    Only the input and online-delay cycles occupy the grid.  The remaining
    digits drain through each PE's selection stage while the next pass (or
    the reduction stages) runs, so they are executed but not charged.
    """
    state = CipuState.initial(pe_cfg, a.shape[:-1])
    charged = 0
    while state.cycle < pe_cfg.total_cycles:
        occupied = state.cycle < pe_cfg.first_digit_cycle
        if state.cycle < pe_cfg.input_cycles:
            state = cipu_step(state, pe_cfg, *columns(a, b, pe_cfg, state.cycle))
        else:
            state = cipu_step(state, pe_cfg)
        charged += occupied
    # converter holds value * 2**out_digits; undo the output-weight alignment
    shift = pe_cfg.out_digits - pe_cfg.frac_bits
    return state.converter.q >> shift, charged


def simulate_layer(layer: LayerShape, inputs, weights, tile: TileConfig = TileConfig(),
                   cfg: CipuConfig = CipuConfig()) -> LayerResult:
    """Digit-level simulation of one convolution layer.

    ``cfg`` supplies ``n`` and ``delta_mult``; the PE composite width is
    derived from the layer and tile.  Each pass costs ``n**2 + delta_mult``
    cycles and each (output group, spatial tile) adds ``k*k`` reduction
    stages of the same length before results go to the output buffer.
    """
    inputs = np.asarray(inputs, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.int64)
    _check_dims(layer, inputs, weights)
    lim = 1 << (cfg.n - 1)
    if inputs.size and (inputs.min() < -lim or inputs.max() >= lim):
        raise ValueError(f"inputs exceed {cfg.n}-bit range")
    if weights.size and (weights.min() < -lim or weights.max() >= lim):
        raise ValueError(f"weights exceed {cfg.n}-bit range")

    sched = schedule_layer(layer, tile)
    pe_cfg = _pe_config(layer, tile, cfg)
    n_pad = sched.channel_groups * tile.T_n
    m_pad = sched.out_groups * tile.T_m
    pixels = layer.R * layer.C
    # activation buffer (CW) and kernel buffer (K), padded to whole tiles
    cw = np.zeros((sched.spatial_tiles * tile.pes, n_pad, layer.k, layer.k), dtype=np.int64)
    cw[:pixels] = _windows(layer, inputs, n_pad)
    kb = np.zeros((m_pad, n_pad, layer.k, layer.k), dtype=np.int64)
    kb[: layer.M, : layer.N] = weights

    out = np.zeros((m_pad, sched.spatial_tiles * tile.pes), dtype=np.int64)
    cycles = 0
    acc = None
    for unit in sched:
        if unit.ch0 == 0:
            acc = np.zeros((tile.T_m, tile.pes), dtype=np.int64)
        p0 = unit.tile * tile.pes
        chs = slice(unit.ch0, unit.ch0 + tile.T_n)
        a = cw[p0 : p0 + tile.pes, chs].reshape(1, tile.pes, -1)
        b = kb[unit.m0 : unit.m0 + tile.T_m, chs].reshape(tile.T_m, 1, -1)
        a, b = np.broadcast_arrays(a, b)
        sums, charged = _run_pass(pe_cfg, np.ascontiguousarray(a), np.ascontiguousarray(b))
        acc += sums
        cycles += charged
        if unit.ch0 + tile.T_n >= n_pad:
            cycles += layer.k * layer.k * pe_cfg.first_digit_cycle
            out[unit.m0 : unit.m0 + tile.T_m, p0 : p0 + tile.pes] = acc
    output = out[: layer.M, :pixels].reshape(layer.M, layer.R, layer.C)
    return LayerResult(output, cycles, scale_exponent=2 * (cfg.n - 1), passes=len(sched))


class BudgetExceeded(ValueError):
    pass


@dataclass
class LayerRun:
    name: str
    cycles: int
    mode: str
    oracle_match: Optional[bool] = None


@dataclass
class NetworkResult:
    layers: List[LayerRun] = field(default_factory=list)

    @property
    def total_cycles(self) -> int:
        return sum(r.cycles for r in self.layers)


def random_layer_tensors(layer: LayerShape, n: int, rng: np.random.Generator):
    lim = 1 << (n - 1)
    x = rng.integers(-lim, lim, size=(layer.N, layer.in_rows, layer.in_cols), dtype=np.int64)
    w = rng.integers(-lim, lim, size=(layer.M, layer.N, layer.k, layer.k), dtype=np.int64)
    return x, w


def simulate_network(layers, cfg: CipuConfig = CipuConfig(), tile: TileConfig = TileConfig(),
                     mode: str = "analytic", seed: int = 0, budget: int = 1 << 22,
                     allow_fallback: bool = False) -> NetworkResult:
    """Run layers in order.

    ``mode="digit"`` simulates each layer on seeded random tensors and checks
    it against ``reference_conv``; layers with ``R*C*N*M > budget`` either
    fall back to closed-form cycles (``allow_fallback``) or raise
    ``BudgetExceeded``.  ``mode="analytic"`` uses closed-form cycles only.
    """
    from lrcipu.perf_model import PerfParams, cycles_layer

    layers = list(layers)
    if not layers:
        raise ValueError("empty layer list")
    if mode not in ("digit", "analytic"):
        raise ValueError(f"unknown mode {mode!r}")
    params = PerfParams(n=cfg.n, delta_mult=cfg.delta_mult, tile=tile)
    rng = np.random.default_rng(seed)
    result = NetworkResult()
    for layer in layers:
        size = layer.R * layer.C * layer.N * layer.M
        if mode == "analytic":
            result.layers.append(LayerRun(layer.name, cycles_layer(layer, params), "analytic"))
        elif size > budget:
            if not allow_fallback:
                raise BudgetExceeded(
                    f"{layer.name}: R*C*N*M = {size} exceeds digit-sim budget {budget}; "
                    "raise --budget, use --mode analytic, or pass --allow-fallback"
                )
            result.layers.append(LayerRun(layer.name, cycles_layer(layer, params), "analytic-fallback"))
        else:
            x, w = random_layer_tensors(layer, cfg.n, rng)
            sim = simulate_layer(layer, x, w, tile, cfg)
            match = bool(np.array_equal(sim.output, reference_conv(layer, x, w)))
            result.layers.append(LayerRun(layer.name, sim.cycles, "digit", match))
    return result
