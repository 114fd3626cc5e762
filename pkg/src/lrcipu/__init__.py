"""Bit-exact model of a left-to-right (MSDF) composite inner-product unit
and the CNN accelerator tile built from it."""

from lrcipu.sdnum import (
    BitColumn,
    FixedPointValue,
    OnTheFlyConverter,
    SignedDigitStream,
    on_the_fly_convert,
    quantize,
    reconstruct,
    to_digit_stream,
)
from lrcipu.online_core import (
    CarrySavePair,
    CipuConfig,
    CipuRun,
    CipuState,
    PartialProductTerm,
    cipu_run,
    cipu_run_batch,
    cipu_step,
    compress_6_2,
    online_multiply,
    pp_term,
    select_digit,
)
from lrcipu.accel_sim import (
    LayerResult,
    LayerShape,
    NetworkResult,
    TileConfig,
    reference_conv,
    schedule_layer,
    simulate_layer,
    simulate_network,
)
from lrcipu.perf_model import (
    ComparisonReport,
    PerfParams,
    baseline_cycles_layer,
    build_report,
    cycles_layer,
    delta_ip,
    inference_time,
    ops_layer,
    throughput_gops,
)

__version__ = "0.1.0"
