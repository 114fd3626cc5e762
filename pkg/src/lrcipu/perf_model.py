"""Closed-form cycle, time and throughput model, plus the comparison report."""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List

from lrcipu.accel_sim import LayerShape, TileConfig


@dataclass(frozen=True)
class PerfParams:
    n: int = 8
    delta_mult: int = 3
    freq_hz: float = 400e6
    tile: TileConfig = TileConfig()

    def __post_init__(self):
        if self.freq_hz <= 0:
            raise ValueError("freq_hz must be positive")


@dataclass(frozen=True)
class BaselineModel:
    """Bit-serial baseline: per-group cost ``n**2 + serial_overhead * n`` and
    ``n_redc`` serialized passes of the ``k*k`` reduction."""

    serial_overhead: int = 2
    n_redc: int = 1


def delta_ip(n: int, delta_mult: int) -> int:
    """Online delay of the inner product: cycles until the first output digit."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return n * n + delta_mult


def _tiling_factor(layer: LayerShape, tile: TileConfig) -> int:
    return math.ceil(layer.R * layer.C / (tile.T_r * tile.T_c)) * math.ceil(layer.M / tile.T_m)


def cycles_layer(layer: LayerShape, p: PerfParams) -> int:
    groups = math.ceil(layer.N / p.tile.T_n)
    return delta_ip(p.n, p.delta_mult) * (layer.k * layer.k + groups) * _tiling_factor(layer, p.tile)


def baseline_cycles_layer(layer: LayerShape, p: PerfParams, model: BaselineModel = BaselineModel()) -> int:
    groups = math.ceil(layer.N / p.tile.T_n)
    per_group = p.n * p.n + model.serial_overhead * p.n
    return per_group * (layer.k * layer.k * model.n_redc + groups) * _tiling_factor(layer, p.tile)


def ops_layer(layer: LayerShape) -> int:
    """Operation count, two per multiply-accumulate."""
    return 2 * layer.k * layer.k * layer.N * layer.M * layer.R * layer.C


def inference_time(cycles, freq_hz) -> float:
    if freq_hz <= 0:
        raise ValueError("freq_hz must be positive")
    return cycles / freq_hz


def throughput_gops(ops, seconds) -> float:
    if seconds <= 0:
        raise ValueError("throughput needs a positive time")
    return ops / seconds / 1e9


# Published synthesis and measurement figures (NanGate 45 nm, 400 MHz).
# Not computable by this model; carried verbatim for side-by-side display.
REFERENCE_NOTE = "published reference, synthesis-derived; not reproduced by this model"

REFERENCE_VALUES = [
    # (metric, design, value, unit)
    ("peak_performance", "l2r", 48.97, "GOPs"),
    ("peak_performance", "baseline", 14.40, "GOPs"),
    ("total_inference_time", "l2r", 0.86, "ms"),
    ("total_inference_time", "baseline", 2.24, "ms"),
    ("performance_gain", "l2r_vs_baseline", 3.40, "x"),
    ("frequency", "l2r", 400, "MHz"),
    ("frequency", "baseline", 400, "MHz"),
    ("precision", "l2r", 8, "bits"),
    ("precision", "baseline", 8, "bits"),
    ("technology", "l2r", 45, "nm"),
    ("technology", "baseline", 45, "nm"),
    ("power", "l2r", 40.67, "mW"),
    ("power", "baseline", 55.61, "mW"),
    ("energy_efficiency", "l2r", 1.20, "TOPS/W"),
    ("energy_efficiency", "baseline", 0.25, "TOPS/W"),
    ("area_efficiency", "l2r", 200.45, "TOPS/mm2"),
    ("area_efficiency", "baseline", 44.40, "TOPS/mm2"),
    ("latency", "l2r", 0.34, "ns"),
    ("latency", "baseline", 3.23, "ns"),
    ("area", "l2r", 244394.24, "um2"),
    ("area", "baseline", 324379.52, "um2"),
    ("peak_performance", "eyeriss_65nm", 46.04, "GOPs"),
    ("total_inference_time", "eyeriss_65nm", 4309, "ms"),
    ("frequency", "eyeriss_65nm", 200, "MHz"),
    ("precision", "eyeriss_65nm", 16, "bits"),
    ("power", "eyeriss_65nm", 236, "mW"),
    ("energy_efficiency", "eyeriss_65nm", 0.19, "TOPS/W"),
    ("area_efficiency", "eyeriss_65nm", 3.75, "TOPS/mm2"),
    ("peak_performance", "lenet5_40nm", 7.87, "GOPs"),
    ("frequency", "lenet5_40nm", 500, "MHz"),
    ("precision", "lenet5_40nm", 8, "bits"),
    ("power", "lenet5_40nm", 91.84, "mW"),
    ("energy_efficiency", "lenet5_40nm", 0.08, "TOPS/W"),
    ("area_efficiency", "lenet5_40nm", 19.19, "TOPS/mm2"),
]


@dataclass(frozen=True)
class LayerRecord:
    name: str
    ops: int
    cycles_l2r: int
    cycles_baseline: int
    time_l2r: float
    time_baseline: float

    @property
    def gops_l2r(self) -> float:
        return throughput_gops(self.ops, self.time_l2r) if self.time_l2r > 0 else 0.0

    @property
    def gops_baseline(self) -> float:
        return throughput_gops(self.ops, self.time_baseline) if self.time_baseline > 0 else 0.0


@dataclass
class ComparisonReport:
    params: PerfParams
    layers: List[LayerRecord]
    totals: LayerRecord
    reference: list = field(default_factory=lambda: list(REFERENCE_VALUES))
    reference_note: str = REFERENCE_NOTE

    @property
    def speedup(self) -> Fraction:
        """Modeled baseline/L2R total-cycle ratio."""
        return Fraction(self.totals.cycles_baseline, self.totals.cycles_l2r)


def build_report(layers, p: PerfParams = PerfParams(), baseline: BaselineModel = BaselineModel()) -> ComparisonReport:
    layers = list(layers)
    if not layers:
        raise ValueError("empty layer list")
    records = []
    for layer in layers:
        c_l2r = cycles_layer(layer, p)
        c_base = baseline_cycles_layer(layer, p, baseline)
        records.append(LayerRecord(
            layer.name, ops_layer(layer), c_l2r, c_base,
            inference_time(c_l2r, p.freq_hz), inference_time(c_base, p.freq_hz),
        ))
    c_l2r = sum(r.cycles_l2r for r in records)
    c_base = sum(r.cycles_baseline for r in records)
    totals = LayerRecord(
        "total", sum(r.ops for r in records), c_l2r, c_base,
        inference_time(c_l2r, p.freq_hz), inference_time(c_base, p.freq_hz),
    )
    return ComparisonReport(p, records, totals)
