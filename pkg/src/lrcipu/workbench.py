"""Command-line front end: ``verify``, ``simulate`` and ``perf``.

Layer tables are comma-separated text, one layer per line::

    # name, R, C, N, M, k, stride, pad
    conv1_1,224,224,3,64,3,1,1

``#`` starts a comment; blank lines are ignored.
"""

import argparse
import csv
import io
import sys
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources

import numpy as np

from lrcipu.accel_sim import (
    BudgetExceeded,
    LayerShape,
    TileConfig,
    random_layer_tensors,
    reference_conv,
    simulate_layer,
    simulate_network,
)
from lrcipu.online_core import (
    CipuConfig,
    CipuState,
    batch_digits,
    cipu_run,
    cipu_run_batch,
    cipu_step,
    online_multiply,
)
from lrcipu.perf_model import PerfParams, build_report, cycles_layer, delta_ip
from lrcipu.sdnum import BitColumn, FixedPointValue, reconstruct

FIELDS = ("name", "R", "C", "N", "M", "k", "stride", "pad")
PRESETS = {"vgg16": "vgg16_conv.csv", "small": "small.csv"}


class LayerTableError(ValueError):
    def __init__(self, line, field, msg):
        super().__init__(f"line {line}, field {field}: {msg}")
        self.line = line
        self.field = field


def parse_layer_table(text: str):
    layers, seen = [], set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != len(FIELDS):
            raise LayerTableError(lineno, "*", f"expected {len(FIELDS)} fields, got {len(parts)}")
        name = parts[0]
        if not name:
            raise LayerTableError(lineno, "name", "empty name")
        if name in seen:
            raise LayerTableError(lineno, "name", f"duplicate layer name {name!r}")
        nums = []
        for fld, tok in zip(FIELDS[1:], parts[1:]):
            try:
                v = int(tok)
            except ValueError:
                raise LayerTableError(lineno, fld, f"not an integer: {tok!r}") from None
            # padding may legitimately be zero
            if v < 0 or (v == 0 and fld != "pad"):
                raise LayerTableError(lineno, fld, f"must be positive, got {v}")
            nums.append(v)
        try:
            layers.append(LayerShape(name, *nums))
        except ValueError as e:
            raise LayerTableError(lineno, "*", str(e)) from None
        seen.add(name)
    return layers


def load_layers(spec: str):
    """Load a preset by name (``vgg16``, ``small``) or a layer-table path."""
    if spec in PRESETS:
        text = resources.files("lrcipu").joinpath("data", PRESETS[spec]).read_text()
    else:
        with open(spec) as f:
            text = f.read()
    return parse_layer_table(text)


@dataclass(frozen=True)
class RunConfig:
    n: int = 8
    delta_mult: int = 3
    freq_mhz: float = 400.0
    tile: TileConfig = TileConfig()
    seed: int = 0
    mode: str = "digit"
    fmt: str = "text"
    budget: int = 1 << 22

    @property
    def cipu(self) -> CipuConfig:
        return CipuConfig(n=self.n, delta_mult=self.delta_mult)

    @property
    def perf(self) -> PerfParams:
        return PerfParams(n=self.n, delta_mult=self.delta_mult, freq_hz=self.freq_mhz * 1e6, tile=self.tile)


# -- rendering ---------------------------------------------------------------

def _ms(seconds):
    return f"{seconds * 1e3:.4f}"


def _g(x):
    return f"{x:.4f}"


def _ref_value(v):
    return f"{v:.2f}" if isinstance(v, float) else str(v)


def _rows(report):
    for r in report.layers + [report.totals]:
        yield [r.name, str(r.ops), str(r.cycles_l2r), str(r.cycles_baseline),
               _ms(r.time_l2r), _ms(r.time_baseline), _g(r.gops_l2r), _g(r.gops_baseline)]


HEADER = ["layer", "ops", "cycles_l2r", "cycles_baseline", "time_l2r_ms",
          "time_baseline_ms", "gops_l2r", "gops_baseline"]


def render_report(report, fmt="text") -> str:
    p = report.params
    speedup = f"{float(report.speedup):.6f}"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["record"] + HEADER)
        rows = list(_rows(report))
        for row in rows[:-1]:
            w.writerow(["layer"] + row)
        w.writerow(["total"] + rows[-1])
        w.writerow(["speedup", "modeled_baseline_over_l2r", speedup, report.totals.cycles_baseline,
                    report.totals.cycles_l2r, "", "", "", ""])
        buf.write("\n")
        w.writerow(["reference", "metric", "design", "value", "unit", "note"])
        for metric, design, value, unit in report.reference:
            w.writerow(["reference", metric, design, _ref_value(value), unit, report.reference_note])
        return buf.getvalue()

    lines = [
        f"Modeled performance: n={p.n} bits, delta_mult={p.delta_mult}, "
        f"f={p.freq_hz / 1e6:g} MHz, tile Tn,Tr,Tc,Tm={p.tile.T_n},{p.tile.T_r},{p.tile.T_c},{p.tile.T_m}",
        "",
    ]
    table = [HEADER] + list(_rows(report))
    widths = [max(len(row[i]) for row in table) for i in range(len(HEADER))]
    for idx, row in enumerate(table):
        if idx == len(table) - 1:
            lines.append("  ".join("-" * w for w in widths))
        lines.append("  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(row, widths))))
    lines += [
        "",
        f"modeled speedup (baseline/l2r cycles): {speedup}x "
        f"= {report.totals.cycles_baseline}/{report.totals.cycles_l2r}",
        "",
        f"Reference values ({report.reference_note}):",
    ]
    for metric, design, value, unit in report.reference:
        lines.append(f"  {metric:<22} {design:<16} {_ref_value(value):>10} {unit}")
    return "\n".join(lines) + "\n"


# -- verify ------------------------------------------------------------------

def _brute_conv(layer, x, w):
    out = np.zeros((layer.M, layer.R, layer.C), dtype=object)
    for m in range(layer.M):
        for r in range(layer.R):
            for c in range(layer.C):
                acc = 0
                for ch in range(layer.N):
                    for kh in range(layer.k):
                        for kw in range(layer.k):
                            y = r * layer.stride + kh - layer.padding
                            z = c * layer.stride + kw - layer.padding
                            if 0 <= y < layer.in_rows and 0 <= z < layer.in_cols:
                                acc += int(x[ch, y, z]) * int(w[m, ch, kh, kw])
                out[m, r, c] = acc
    return out


def _suite_multiplier(cfg, rng, fault):
    checked = 0
    for n in (2, 3, 4):
        c = CipuConfig(n=n, k=1, delta_mult=cfg.delta_mult)
        lo, hi = -(1 << (n - 1)), 1 << (n - 1)
        for a in range(lo, hi):
            for b in range(lo, hi):
                s = online_multiply(FixedPointValue(a, n), FixedPointValue(b, n), c)
                if reconstruct(s) != Fraction(a * b, 1 << (2 * n - 2)):
                    return False, f"n={n} a={a} b={b}"
                checked += 1
    return True, f"pairs={checked}"


def _suite_cipu(cfg, rng, fault, count=100):
    n = cfg.n
    lim = 1 << (n - 1)
    for k in (1, 9, 72):
        c = CipuConfig(n=n, k=k, delta_mult=cfg.delta_mult)
        a = rng.integers(-lim, lim, size=(count, k))
        b = rng.integers(-lim, lim, size=(count, k))
        state, _ = cipu_run_batch(a, b, c)
        d = batch_digits(state)
        got = [sum(int(x) << (c.out_digits - t - 1) for t, x in enumerate(row)) for row in d]
        want = [int(v) << (c.out_digits - c.frac_bits) for v in np.sum(a * b, axis=-1)]
        if got != want:
            return False, f"k={k} mismatch"
        # one unit through the scalar path as a cross-check
        run = cipu_run([FixedPointValue(int(v), n) for v in a[0]], [FixedPointValue(int(v), n) for v in b[0]], c)
        if reconstruct(run.stream) != Fraction(int(np.dot(a[0], b[0])), 1 << (2 * n - 2)):
            return False, f"k={k} scalar mismatch"
    return True, f"vectors={3 * count} n={n}"


def _suite_delay(cfg, rng, fault):
    for n in (2, 4, 8):
        for dm in sorted({0, cfg.delta_mult}):
            for k in (1, 9, 72):
                actual = dm + 1 if fault == "delay" else dm
                c = CipuConfig(n=n, k=k, delta_mult=actual)
                one = FixedPointValue(1, n)
                run = cipu_run([one] * k, [one] * k, c)
                if run.first_digit_cycle != delta_ip(n, dm):
                    return False, f"n={n} delta_mult={dm} k={k}: first digit at {run.first_digit_cycle}, want {delta_ip(n, dm)}"
    return True, "n in {2,4,8}, k in {1,9,72}"


def _suite_schedule(cfg, rng, fault, runs=40):
    cycles = 0
    for _ in range(runs):
        n = int(rng.choice([2, 4, 8]))
        k = int(rng.integers(1, 10))
        c = CipuConfig(n=n, k=k, delta_mult=cfg.delta_mult)
        state = CipuState.initial(c)
        while state.cycle < c.total_cycles:
            cols = ()
            if state.cycle < c.input_cycles:
                i, j = state.cycle % n + 1, state.cycle // n + 1
                cols = (BitColumn(rng.integers(0, 2, k).tolist(), i == 1),
                        BitColumn(rng.integers(0, 2, k).tolist(), j == 1))
            nxt = cipu_step(state, c, *cols)
            if nxt.cycle % n == 0 and nxt.ppr.value != 0:
                return False, f"PPR nonzero after cycle {nxt.cycle}"
            if nxt.cycle % n != 0 and nxt.residual != state.residual:
                return False, f"residual changed after cycle {nxt.cycle}"
            state = nxt
            cycles += 1
    return True, f"cycles={cycles}"


_GRID = [
    LayerShape("g1", 1, 1, 8, 1, 1),
    LayerShape("g2", 5, 7, 3, 2, 3, 1, 1),
    LayerShape("g3", 8, 8, 9, 2, 1),
    LayerShape("g4", 9, 9, 4, 3, 3, 1, 1),
]


def _suite_grid(cfg, rng, fault):
    for n in (2, 4, 8):
        c = CipuConfig(n=n, delta_mult=cfg.delta_mult)
        p = PerfParams(n=n, delta_mult=cfg.delta_mult, tile=cfg.tile)
        for layer in _GRID:
            x, w = random_layer_tensors(layer, n, rng)
            sim = simulate_layer(layer, x, w, cfg.tile, c)
            if sim.cycles != cycles_layer(layer, p):
                return False, f"{layer.name} n={n}: {sim.cycles} != {cycles_layer(layer, p)}"
    return True, f"layers={3 * len(_GRID)}"


def _suite_conv(cfg, rng, fault, count=4):
    for idx in range(count):
        k = int(rng.choice([1, 3]))
        layer = LayerShape(f"r{idx}", int(rng.integers(1, 9)), int(rng.integers(1, 9)),
                           int(rng.integers(1, 12)), int(rng.integers(1, 4)), k, 1, k // 2)
        x, w = random_layer_tensors(layer, cfg.n, rng)
        ref = reference_conv(layer, x, w)
        if not np.array_equal(ref, _brute_conv(layer, x, w).astype(np.int64)):
            return False, f"{layer} reference mismatch"
        if not np.array_equal(simulate_layer(layer, x, w, cfg.tile, cfg.cipu).output, ref):
            return False, f"{layer} simulator mismatch"
    return True, f"layers={count}"


SUITES = [
    ("multiplier-exhaustive", _suite_multiplier),
    ("cipu-random", _suite_cipu),
    ("online-delay", _suite_delay),
    ("schedule-discipline", _suite_schedule),
    ("sim-formula-grid", _suite_grid),
    ("conv-oracle", _suite_conv),
]


def run_verify(cfg: RunConfig, fault=None):
    """Run every suite; returns (transcript lines, all passed)."""
    lines, ok = [], True
    for idx, (name, fn) in enumerate(SUITES):
        rng = np.random.default_rng([cfg.seed, idx])
        passed, detail = fn(cfg, rng, fault)
        ok &= passed
        lines.append(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
    lines.append(f"{'ALL PASS' if ok else 'FAILED'} (seed={cfg.seed})")
    return lines, ok


# -- commands ----------------------------------------------------------------

def cmd_verify(cfg: RunConfig, out=None, fault=None) -> int:
    out = out or sys.stdout
    lines, ok = run_verify(cfg, fault)
    out.write("\n".join(lines) + "\n")
    return 0 if ok else 1


def cmd_perf(layers, cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    out.write(render_report(build_report(layers, cfg.perf), cfg.fmt))
    return 0


def cmd_simulate(layers, cfg: RunConfig, out=None, allow_fallback=False) -> int:
    out = out or sys.stdout
    try:
        res = simulate_network(layers, cfg.cipu, cfg.tile, mode=cfg.mode, seed=cfg.seed,
                               budget=cfg.budget, allow_fallback=allow_fallback)
    except BudgetExceeded as e:
        sys.stderr.write(f"refused: {e}\n")
        return 2
    ok = True
    rows = []
    for layer, run in zip(layers, res.layers):
        formula = cycles_layer(layer, cfg.perf)
        match = {None: "n/a", True: "yes", False: "no"}[run.oracle_match]
        ok &= run.oracle_match is not False and run.cycles == formula
        rows.append([layer.name, run.mode, str(run.cycles), str(formula),
                     "yes" if run.cycles == formula else "no", match])
    header = ["layer", "mode", "cycles", "formula_cycles", "cycles-match", "oracle-match"]
    if cfg.fmt == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        w.writerow(["total", "", str(res.total_cycles), "", "", ""])
    else:
        out.write(f"Simulation: n={cfg.n}, delta_mult={cfg.delta_mult}, seed={cfg.seed}\n")
        for r in rows:
            out.write(f"{r[0]}: mode={r[1]} cycles={r[2]} formula={r[3]} "
                      f"cycles-match: {r[4]} oracle-match: {r[5]}\n")
        out.write(f"total cycles: {res.total_cycles}\n")
    return 0 if ok else 1


def _tile(text):
    try:
        vals = [int(v) for v in text.split(",")]
        return TileConfig(*vals) if len(vals) == 4 else None
    except ValueError:
        return None


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--layers", default="vgg16", help="layer table path, or preset: vgg16, small")
    common.add_argument("--precision", type=int, default=8)
    common.add_argument("--delta-mult", type=int, default=3)
    common.add_argument("--freq-mhz", type=float, default=400.0)
    common.add_argument("--tile", default="8,8,8,1", help="Tn,Tr,Tc,Tm")
    common.add_argument("--mode", choices=["digit", "analytic"], default="digit")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=["text", "csv"], default="text")
    common.add_argument("--budget", type=int, default=1 << 22,
                        help="max R*C*N*M per layer in digit mode")

    parser = argparse.ArgumentParser(prog="lrcipu", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    v = sub.add_parser("verify", parents=[common], help="run the oracle suites")
    v.add_argument("--inject-fault", choices=["delay"], help=argparse.SUPPRESS)
    s = sub.add_parser("simulate", parents=[common], help="digit-level layer simulation")
    s.add_argument("--allow-fallback", action="store_true",
                   help="use closed-form cycles for layers over the budget")
    sub.add_parser("perf", parents=[common], help="performance comparison report")
    return parser


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    tile = _tile(args.tile)
    if tile is None:
        parser.error(f"--tile expects four positive integers, got {args.tile!r}")
    if args.precision < 2:
        parser.error("--precision must be >= 2")
    cfg = RunConfig(n=args.precision, delta_mult=args.delta_mult, freq_mhz=args.freq_mhz, tile=tile,
                    seed=args.seed, mode=args.mode, fmt=args.format, budget=args.budget)
    if args.command == "verify":
        return cmd_verify(cfg, fault=args.inject_fault)
    try:
        layers = load_layers(args.layers)
    except (OSError, LayerTableError) as e:
        sys.stderr.write(f"error: {e}\n")
        return 2
    if not layers:
        sys.stderr.write("error: no layers\n")
        return 2
    if args.command == "perf":
        return cmd_perf(layers, cfg)
    return cmd_simulate(layers, cfg, allow_fallback=args.allow_fallback)


if __name__ == "__main__":
    sys.exit(main())
