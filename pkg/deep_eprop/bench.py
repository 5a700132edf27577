'''
@description:
- Instrumented sweeps that count the work and storage of each gradient algorithm
  across hidden width H, depth L and sequence length T, and fit log-log slopes to
  the counts.
'''

import csv
import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import product

import numpy as np

from .linalg import OpCounter
from .network import LayerSpec, NetworkSpec, TraceMode, init_params
from .trainer import Algorithm, episode_gradient

logger = logging.getLogger(__name__)

SINGLE_LAYER = (Algorithm.RTRL, Algorithm.EPROP)
DEFAULT_TRACE_LIMIT = 50_000_000
METRICS = ("flops_per_step", "peak_trace_values", "stored_activation_values")
DIMS = ("H", "L", "T")
CSV_COLUMNS = ("algorithm", "H", "L", "T", "flops_per_step", "peak_trace_values", "stored_activation_values",
               "wall_seconds", "status")


@dataclass(frozen=True)
class SweepRow:
    algorithm: str
    H: int
    L: int
    T: int
    flops_per_step: float = 0.0
    peak_trace_values: int = 0
    stored_activation_values: int = 0
    wall_seconds: float = None
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)

    def select(self, algorithm: str, **fixed) -> list:
        return [row for row in self.rows
                if row.algorithm == algorithm and row.ok and all(getattr(row, k) == v for k, v in fixed.items())]


def bench_spec(width: int, depth: int) -> NetworkSpec:
    '''
    Chain of ``depth`` tanh layers of ``width`` units, input width ``width``, scalar
    readout, tracking the bottom layer's recurrent weights (an H x H parameter).
    '''

    layers = tuple(LayerSpec(f"l{i + 1}", width) for i in range(depth))
    return NetworkSpec(input_dim=width, layers=layers, readout_dim=1, tracked_groups=("l1.W_rec",),
                       trace_mode=TraceMode.DIAG_EVERYWHERE)


def estimated_trace_values(algorithm: Algorithm, width: int, depth: int) -> int:
    params = width * width
    if algorithm in (Algorithm.RTRL, Algorithm.DEEP_RTRL):
        return depth * width * params
    if algorithm in (Algorithm.EPROP, Algorithm.DEEP_EPROP):
        return depth * params
    return 0


def run_point(algorithm: str, width: int, depth: int, length: int, seed: int, timed: bool = True,
              trace_limit: int = DEFAULT_TRACE_LIMIT) -> SweepRow:
    '''
    **Purpose:**
    - Run one algorithm on one random episode and read its counter.
      Deep E-prop runs in ``diag_everywhere`` mode so every trace is per-synapse.
    '''

    algorithm = Algorithm(algorithm)
    if algorithm in SINGLE_LAYER and depth != 1:
        return SweepRow(algorithm.value, width, depth, length, status="skipped: single-layer algorithm")
    estimate = estimated_trace_values(algorithm, width, depth)
    if estimate > trace_limit:
        return SweepRow(algorithm.value, width, depth, length,
                        status=f"skipped: {estimate} trace values exceed the limit of {trace_limit}")

    spec = bench_spec(width, depth)
    params = init_params(spec, seed)
    rng = np.random.default_rng(seed)
    inputs = rng.standard_normal((length, width))
    target = rng.standard_normal(1)

    counter = OpCounter()
    start = time.perf_counter()
    episode_gradient(algorithm, spec, params, inputs, target, TraceMode.DIAG_EVERYWHERE, counter)
    elapsed = time.perf_counter() - start

    return SweepRow(
        algorithm=algorithm.value,
        H=width,
        L=depth,
        T=length,
        flops_per_step=counter.flops / length,
        peak_trace_values=counter.peak_trace_values,
        stored_activation_values=counter.stored_activation_values,
        wall_seconds=elapsed if timed else None,
    )


def _run_point_args(args: tuple) -> SweepRow:
    return run_point(*args)


def run_sweep(algorithms, widths, depths, lengths, seed: int = 0, workers: int = 1, timed: bool = True,
              trace_limit: int = DEFAULT_TRACE_LIMIT) -> SweepResult:
    '''
    **Purpose:**
    - Measure every (algorithm, H, L, T) combination.

    **Args:**
    - ``algorithms``: Algorithm names.
    - ``widths``, ``depths``, ``lengths``: Values of H, L, T (all >= 1).
    - ``seed (int)``: Seed for parameters and inputs; counts do not depend on it.
    - ``workers (int)``: Points run in that many processes when > 1; wall time is then suppressed.
    - ``timed (bool)``: Record wall time in sequential runs.

    **Raises:**
    - ``ValueError``: If any dimension is < 1.
    '''

    for name, values in (("H", widths), ("L", depths), ("T", lengths)):
        if not values or min(values) < 1:
            raise ValueError(f"{name} values must be >= 1, got {list(values)}")

    points = [(Algorithm(a).value, h, l, t, seed, timed and workers <= 1, trace_limit)
              for a, h, l, t in product(algorithms, widths, depths, lengths)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_point_args, points))
    else:
        rows = [run_point(*point) for point in points]

    for row in rows:
        if row.ok:
            logger.info(f"{row.algorithm} H={row.H} L={row.L} T={row.T}: {row.flops_per_step:.0f} flops/step, "
                        f"{row.peak_trace_values} trace values")
        else:
            logger.info(f"{row.algorithm} H={row.H} L={row.L} T={row.T}: {row.status}")
    return SweepResult(rows)


def fit_slope(dims, counts) -> float:
    '''Least-squares slope of log(count) against log(dim).'''
    return float(np.polyfit(np.log(np.asarray(dims, dtype=np.float64)),
                            np.log(np.asarray(counts, dtype=np.float64)), 1)[0])


def scaling_slopes(result: SweepResult, min_points: int = 3) -> tuple:
    '''
    **Purpose:**
    - Fit one slope per (algorithm, varied dimension, metric, fixed values of the other
      two dimensions) series.

    **Returns:**
    - ``tuple[list[dict], list[str]]``: Fitted series and notices for series left out
      (too few points, or nonpositive counts).
    '''

    fits, notices = [], []
    algorithms = sorted({row.algorithm for row in result.rows if row.ok})
    for algorithm in algorithms:
        rows = [row for row in result.rows if row.algorithm == algorithm and row.ok]
        for varied in DIMS:
            others = [d for d in DIMS if d != varied]
            groups = {}
            for row in rows:
                groups.setdefault(tuple(getattr(row, d) for d in others), []).append(row)
            for fixed, series in sorted(groups.items()):
                series = sorted(series, key=lambda r: getattr(r, varied))
                dims = [getattr(r, varied) for r in series]
                if len(set(dims)) < 2:
                    continue
                label = f"{algorithm} vs {varied} at " + ", ".join(f"{d}={v}" for d, v in zip(others, fixed))
                if len(set(dims)) < min_points:
                    notices.append(f"{label}: {len(set(dims))} points, need {min_points}; fit omitted")
                    continue
                for metric in METRICS:
                    counts = [getattr(r, metric) for r in series]
                    if min(counts) <= 0:
                        notices.append(f"{label}, {metric}: nonpositive counts; fit omitted")
                        continue
                    fits.append({
                        "algorithm": algorithm,
                        "varied": varied,
                        "metric": metric,
                        "fixed": dict(zip(others, fixed)),
                        "points": len(dims),
                        "slope": fit_slope(dims, counts),
                    })
    for notice in notices:
        logger.warning(notice)
    return fits, notices


def sweep_csv(result: SweepResult) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in result.rows:
        values = asdict(row)
        values["flops_per_step"] = repr(float(row.flops_per_step))
        values["wall_seconds"] = "" if row.wall_seconds is None else f"{row.wall_seconds:.6f}"
        writer.writerow([values[column] for column in CSV_COLUMNS])
    return buffer.getvalue()


def emit_scaling_report(result: SweepResult, csv_path: str = None, min_points: int = 3) -> tuple:
    '''
    **Purpose:**
    - Render the sweep as CSV (header row included) and fit log-log slopes.

    **Args:**
    - ``result (SweepResult)``: Sweep to report.
    - ``csv_path (str | None)``: When given, the CSV is also written there.

    **Returns:**
    - ``tuple[str, list[dict], list[str]]``: CSV text, fitted slopes, notices.
    '''

    text = sweep_csv(result)
    if csv_path is not None:
        with open(csv_path, "w", newline="", encoding="utf-8") as f:
            f.write(text)
    fits, notices = scaling_slopes(result, min_points)
    return text, fits, notices
