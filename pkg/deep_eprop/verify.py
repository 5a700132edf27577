'''
@description:
- The verification battery behind ``deep-eprop verify``: cross-checks of every
  gradient engine against the oracles on a user spec and on seeded random
  instances, exactness regimes of E-prop, path counts, measured complexity and
  the online contract of the forward-mode engines.
'''

import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .bench import fit_slope, run_sweep
from .eprop import DeepEprop, deep_eprop_episode, eprop_episode
from .errors import ResourceLimitError, SpecError
from .linalg import ActivationKind
from .network import (GraphSpec, LayerSpec, LossTimesteps, NetworkSpec, ParameterSet, TraceMode, init_params,
                      input_rows, loss_steps, target_rows)
from .oracles import bptt_gradient, count_gradient_paths, enumerate_gradient_paths, finite_diff_gradient
from .rtrl import DeepRTRL, deep_rtrl_episode
from .trainer import gradient_alignment

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCES = {
    "deep_rtrl": 1e-9,
    "finite_diff": 1e-5,
    "paths": 1e-10,
    "eprop": 1e-9,
}
SMOOTH_ACTIVATIONS = (ActivationKind.TANH, ActivationKind.SIGMOID, ActivationKind.LINEAR)
SPEC_PATH_CAP = 100_000
SPEC_FD_CAP = 5_000


@dataclass
class Check:
    '''
    **Purpose:**
    - Outcome of one verification check.

    **Attributes:**
    - ``name (str)``: Check identifier, e.g. ``deep_rtrl_vs_bptt``.
    - ``passed (bool)``: Whether the check held.
    - ``required (bool)``: Informational checks never fail a run.
    - ``worst_error (float | None)``: Largest error seen across the instances.
    - ``tolerance (float | None)``: Bound ``worst_error`` was held to.
    - ``instances (int)``: Number of instances compared.
    - ``detail (str)``: Worst case or measured values, human readable.
    - ``skipped (bool)``: The check did not apply (counts as passed).
    '''

    name: str
    passed: bool
    required: bool = True
    worst_error: float = None
    tolerance: float = None
    instances: int = 0
    detail: str = ""
    skipped: bool = False


@dataclass(frozen=True)
class Instance:
    spec: object
    params: ParameterSet
    inputs: np.ndarray = field(repr=False)
    targets: np.ndarray = field(repr=False)


class _Worst:
    '''Running maximum of an error and the case that produced it.'''

    def __init__(self):
        self.error = 0.0
        self.case = ""
        self.count = 0

    def add(self, error: float, case: str) -> None:
        self.count += 1
        error = float(error) if np.isfinite(error) else float("inf")
        if error > self.error or not self.case:
            self.error, self.case = error, case

    def check(self, name: str, tolerance: float) -> Check:
        passed = self.error <= tolerance
        detail = f"worst {self.error:.3e} on {self.case}" if self.count else "no instances"
        return Check(name, passed, worst_error=self.error, tolerance=tolerance, instances=self.count, detail=detail)


def resolve_tolerances(override: float = None) -> dict:
    '''Default tolerances, or ``override`` for every one of them.'''
    if override is None:
        return dict(DEFAULT_TOLERANCES)
    if not override >= 0:
        raise ValueError(f"tolerance must be >= 0, got {override}")
    return {name: float(override) for name in DEFAULT_TOLERANCES}


def relative_error(candidate: dict, reference: dict) -> float:
    return gradient_alignment(candidate, reference).relative_l2


def track_all(spec):
    '''Copy of ``spec`` tracking every parameter group.'''
    return dataclasses.replace(spec, tracked_groups=tuple(info.group_id for info in spec.as_graph().groups))


def _draw_data(rng, spec, length: int) -> tuple:
    graph = spec.as_graph()
    inputs = rng.standard_normal((length, graph.input_dim))
    targets = rng.standard_normal((length, graph.readout_dim))
    return inputs, targets


def random_chain_instance(seed: int, depth: int, width: int, length: int, equal_widths: bool = False,
                          trace_mode: TraceMode = TraceMode.DIAG_HOME_DENSE_ABOVE,
                          loss_timesteps: LossTimesteps = None) -> Instance:
    '''
    **Purpose:**
    - Seeded random chain with every group tracked: widths in ``2..width`` (or all
      equal to ``width``), smooth activations, input and readout widths in 1..3.
    '''

    if width < 2:
        raise ValueError(f"width must be at least 2, got {width}")
    rng = np.random.default_rng(seed)
    widths = [width] * depth if equal_widths else [int(w) for w in rng.integers(2, width + 1, size=depth)]
    layers = tuple(
        LayerSpec(f"l{i + 1}", w, SMOOTH_ACTIVATIONS[int(rng.integers(len(SMOOTH_ACTIVATIONS)))])
        for i, w in enumerate(widths)
    )
    if loss_timesteps is None:
        loss_timesteps = LossTimesteps.EVERY_STEP if rng.random() < 0.5 else LossTimesteps.FINAL_ONLY
    spec = track_all(NetworkSpec(
        input_dim=int(rng.integers(1, 4)),
        layers=layers,
        readout_dim=int(rng.integers(1, 3)),
        loss_timesteps=loss_timesteps,
        trace_mode=trace_mode,
        seed=seed,
    ))
    inputs, targets = _draw_data(rng, spec, length)
    return Instance(spec, init_params(spec, seed), inputs, targets)


def random_dag_instance(seed: int, max_nodes: int = 5, width: int = 4, length: int = 6) -> Instance:
    '''
    **Purpose:**
    - Seeded random DAG of 2..``max_nodes`` nodes. Edges only run from lower to higher
      index; every node without predecessors receives the input and every node but the
      last feeds at least one later node, so all of them reach the output. Node widths
      are drawn from ``2..width``.
    '''

    rng = np.random.default_rng(seed)
    count = int(rng.integers(2, max_nodes + 1))
    ids = [f"n{i + 1}" for i in range(count)]
    edges = {(ids[i], ids[j]) for i in range(count) for j in range(i + 1, count) if rng.random() < 0.5}
    for i in range(count - 1):
        if not any(src == ids[i] for src, _ in edges):
            edges.add((ids[i], ids[int(rng.integers(i + 1, count))]))
    targets_of = {dst for _, dst in edges}
    nodes = tuple(
        LayerSpec(node, int(rng.integers(2, width + 1)), SMOOTH_ACTIVATIONS[int(rng.integers(len(SMOOTH_ACTIVATIONS)))],
                  has_recurrence=bool(rng.random() < 0.8))
        for node in ids
    )
    spec = track_all(GraphSpec(
        input_dim=int(rng.integers(1, 4)),
        nodes=nodes,
        edges=tuple(sorted(edges)),
        input_nodes=tuple(node for node in ids if node not in targets_of),
        output_node=ids[-1],
        readout_dim=int(rng.integers(1, 3)),
        loss_timesteps=LossTimesteps.EVERY_STEP if rng.random() < 0.5 else LossTimesteps.FINAL_ONLY,
        seed=seed,
    ))
    inputs, targets = _draw_data(rng, spec, length)
    return Instance(spec, init_params(spec, seed), inputs, targets)


def random_diamond_instance(seed: int, width: int = 3, length: int = 4,
                            trace_mode: TraceMode = TraceMode.DIAG_HOME_DENSE_ABOVE) -> Instance:
    '''Diamond a -> {b, c} -> d with equal widths, every group tracked, loss at every step.'''

    rng = np.random.default_rng(seed)
    nodes = tuple(LayerSpec(node, width) for node in ("a", "b", "c", "d"))
    spec = track_all(GraphSpec(
        input_dim=2,
        nodes=nodes,
        edges=(("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")),
        input_nodes=("a",),
        output_node="d",
        readout_dim=1,
        loss_timesteps=LossTimesteps.EVERY_STEP,
        trace_mode=trace_mode,
        seed=seed,
    ))
    inputs, targets = _draw_data(rng, spec, length)
    return Instance(spec, init_params(spec, seed), inputs, targets)


def _describe(inst: Instance) -> str:
    graph = inst.spec.as_graph()
    widths = ",".join(str(graph.layer(node).hidden_dim) for node in graph.order)
    return f"seed {graph.seed} ({len(graph.nodes)} nodes, widths {widths}, T={inst.inputs.shape[0]})"


def check_deep_rtrl_exact(seed: int, quick: bool, tolerance: float) -> Check:
    '''Deep RTRL against BPTT on random chains (L 1..4, H 2..8, T 2..12) and DAGs of up to 5 nodes.'''

    rng = np.random.default_rng(seed)
    worst = _Worst()
    for _ in range(10 if quick else 100):
        inst = random_chain_instance(int(rng.integers(2 ** 31)), int(rng.integers(1, 5)), int(rng.integers(2, 9)),
                                     int(rng.integers(2, 13)))
        exact = deep_rtrl_episode(inst.spec, inst.params, inst.inputs, inst.targets)
        worst.add(relative_error(exact, bptt_gradient(inst.spec, inst.params, inst.inputs, inst.targets)),
                  _describe(inst))
    for _ in range(4 if quick else 20):
        inst = random_dag_instance(int(rng.integers(2 ** 31)), length=int(rng.integers(2, 9)))
        exact = deep_rtrl_episode(inst.spec, inst.params, inst.inputs, inst.targets)
        worst.add(relative_error(exact, bptt_gradient(inst.spec, inst.params, inst.inputs, inst.targets)),
                  "DAG " + _describe(inst))
    return worst.check("deep_rtrl_vs_bptt", tolerance)


def check_finite_diff(seed: int, quick: bool, tolerance: float) -> Check:
    '''BPTT against central finite differences (step 1e-5) on small random chains.'''

    rng = np.random.default_rng(seed)
    worst = _Worst()
    for _ in range(5 if quick else 20):
        inst = random_chain_instance(int(rng.integers(2 ** 31)), int(rng.integers(1, 3)), int(rng.integers(2, 4)),
                                     int(rng.integers(1, 6)))
        reference = finite_diff_gradient(inst.spec, inst.params, inst.inputs, inst.targets)
        worst.add(relative_error(bptt_gradient(inst.spec, inst.params, inst.inputs, inst.targets), reference),
                  _describe(inst))
    return worst.check("bptt_vs_finite_diff", tolerance)


def check_path_sum(seed: int, quick: bool, tolerance: float) -> Check:
    '''BPTT against the summed gradient paths on every chain with L <= 3, T <= 4 (H <= 3) and a diamond DAG.'''

    rng = np.random.default_rng(seed)
    worst = _Worst()
    cases = [(depth, length) for depth in range(1, 4) for length in range(1, 5)]
    if quick:
        cases = cases[::3]
    for depth, length in cases:
        inst = random_chain_instance(int(rng.integers(2 ** 31)), depth, int(rng.integers(2, 4)), length)
        _, summed = enumerate_gradient_paths(inst.spec, inst.params, inst.inputs, inst.targets)
        worst.add(relative_error(summed, bptt_gradient(inst.spec, inst.params, inst.inputs, inst.targets)),
                  _describe(inst))
    inst = random_diamond_instance(int(rng.integers(2 ** 31)))
    _, summed = enumerate_gradient_paths(inst.spec, inst.params, inst.inputs, inst.targets)
    worst.add(relative_error(summed, bptt_gradient(inst.spec, inst.params, inst.inputs, inst.targets)),
              "diamond " + _describe(inst))
    return worst.check("bptt_vs_paths", tolerance)


def path_count_spec(depth: int) -> NetworkSpec:
    '''Chain of ``depth`` width-2 layers, loss at the final step, tracking the bottom input weights.'''
    layers = tuple(LayerSpec(f"l{i + 1}", 2) for i in range(depth))
    return NetworkSpec(input_dim=1, layers=layers, readout_dim=1, loss_timesteps=LossTimesteps.FINAL_ONLY,
                       tracked_groups=("l1.W_in",))


def check_path_counts(seed: int, quick: bool, tolerance: float) -> Check:
    '''
    Path counts for a chain with loss at T: T paths for one layer, 6 for two layers
    over three steps, C(T+L-1, L) for every L <= 4 and T <= 6.
    '''

    rng = np.random.default_rng(seed)
    mismatches = []
    instances = 0
    for depth in range(1, 5):
        spec = path_count_spec(depth)
        for length in range(1, 7):
            instances += 1
            expected = comb(length + depth - 1, depth)
            counted = count_gradient_paths(spec, length)
            if counted != expected:
                mismatches.append(f"L={depth} T={length}: counted {counted}, expected {expected}")

    for depth, length in ((1, 4), (2, 3)):
        spec = path_count_spec(depth)
        params = init_params(spec, seed)
        paths, _ = enumerate_gradient_paths(spec, params, rng.standard_normal((length, 1)),
                                            rng.standard_normal((length, 1)))
        expected = length if depth == 1 else 6
        if len(paths) != expected:
            mismatches.append(f"L={depth} T={length}: enumerated {len(paths)}, expected {expected}")
        if not all(path.is_monotone() for path in paths):
            mismatches.append(f"L={depth} T={length}: non-monotone path")

    detail = "; ".join(mismatches) if mismatches else f"{instances} (L, T) pairs match C(T+L-1, L)"
    return Check("path_counts", not mismatches, instances=instances, detail=detail)


def diagonal_recurrence(spec, params: ParameterSet, cross_layer: bool = False) -> ParameterSet:
    '''Keep only the diagonals of the recurrent (and optionally the square cross-layer) weights.'''

    graph = spec.as_graph()
    updates = {}
    for node in graph.order:
        if graph.layer(node).has_recurrence:
            gid = f"{node}.W_rec"
            updates[gid] = np.diag(np.diag(params[gid]))
        if cross_layer:
            for pred in graph.preds(node):
                gid = graph.edge_group(pred, node)
                updates[gid] = np.diag(np.diag(params[gid]))
    return params.replace(updates)


def zero_recurrence(spec, params: ParameterSet) -> ParameterSet:
    graph = spec.as_graph()
    return params.replace({f"{node}.W_rec": np.zeros_like(params[f"{node}.W_rec"])
                           for node in graph.order if graph.layer(node).has_recurrence})


def check_eprop_exact(seed: int, quick: bool, tolerance: float) -> Check:
    '''
    **Purpose:**
    - E-prop against BPTT where the truncation drops nothing: a single step, zero
      recurrent weights, diagonal recurrent weights (``diag_home_dense_above``), and
      diagonal recurrent plus diagonal cross-layer weights (``diag_everywhere``).
    '''

    rng = np.random.default_rng(seed)
    worst = _Worst()
    dense = TraceMode.DIAG_HOME_DENSE_ABOVE
    for _ in range(5 if quick else 50):
        depth, width = int(rng.integers(1, 4)), int(rng.integers(2, 6))

        inst = random_chain_instance(int(rng.integers(2 ** 31)), depth, width, 1)
        worst.add(relative_error(deep_eprop_episode(inst.spec, inst.params, inst.inputs, inst.targets, dense),
                                 bptt_gradient(inst.spec, inst.params, inst.inputs, inst.targets)),
                  "T=1 " + _describe(inst))

        inst = random_chain_instance(int(rng.integers(2 ** 31)), depth, width, int(rng.integers(2, 9)))
        params = zero_recurrence(inst.spec, inst.params)
        worst.add(relative_error(deep_eprop_episode(inst.spec, params, inst.inputs, inst.targets, dense),
                                 bptt_gradient(inst.spec, params, inst.inputs, inst.targets)),
                  "zero recurrence " + _describe(inst))

        inst = random_chain_instance(int(rng.integers(2 ** 31)), depth, width, int(rng.integers(2, 9)))
        params = diagonal_recurrence(inst.spec, inst.params)
        worst.add(relative_error(deep_eprop_episode(inst.spec, params, inst.inputs, inst.targets, dense),
                                 bptt_gradient(inst.spec, params, inst.inputs, inst.targets)),
                  "diagonal recurrence " + _describe(inst))

        inst = random_chain_instance(int(rng.integers(2 ** 31)), depth, width, int(rng.integers(2, 9)),
                                     equal_widths=True, trace_mode=TraceMode.DIAG_EVERYWHERE)
        params = diagonal_recurrence(inst.spec, inst.params, cross_layer=True)
        worst.add(relative_error(deep_eprop_episode(inst.spec, params, inst.inputs, inst.targets),
                                 bptt_gradient(inst.spec, params, inst.inputs, inst.targets)),
                  "diag_everywhere, diagonal weights " + _describe(inst))
    return worst.check("eprop_exact_regimes", tolerance)


def check_eprop_alignment(seed: int, quick: bool, tolerance: float) -> Check:
    '''Cosine between single-layer E-prop and BPTT on dense instances (H=6, T=10); the median must be positive.'''

    rng = np.random.default_rng(seed)
    cosines = []
    for _ in range(20 if quick else 100):
        inst_seed = int(rng.integers(2 ** 31))
        spec = NetworkSpec(input_dim=3, layers=(LayerSpec("l1", 6),), readout_dim=1,
                           loss_timesteps=LossTimesteps.EVERY_STEP, tracked_groups=("l1.W_in", "l1.W_rec"),
                           seed=inst_seed)
        data = np.random.default_rng(inst_seed)
        inputs, targets = _draw_data(data, spec, 10)
        params = init_params(spec, inst_seed)
        approx = eprop_episode(spec, params, inputs, targets)
        cosines.append(gradient_alignment(approx, bptt_gradient(spec, params, inputs, targets)).cosine)

    median = float(np.median(cosines))
    detail = (f"cosine median {median:.4f}, min {min(cosines):.4f}, max {max(cosines):.4f}, "
              f"quartiles {np.percentile(cosines, 25):.4f}/{np.percentile(cosines, 75):.4f}")
    return Check("eprop_alignment", median > 0, instances=len(cosines), detail=detail)


def check_complexity(seed: int, quick: bool, tolerance: float) -> Check:
    '''
    **Purpose:**
    - Counted work and storage follow the predicted scaling: RTRL flops ~ H^4,
      E-prop trace storage constant in T and equal to L x parameter count, BPTT
      activation storage linear in T, deep RTRL trace storage linear in L.
    '''

    findings, failures = [], []

    rtrl = run_sweep(["rtrl"], [4, 8, 16], [1], [4], seed=seed, timed=False)
    rows = sorted(rtrl.select("rtrl"), key=lambda r: r.H)
    slope = fit_slope([r.H for r in rows], [r.flops_per_step for r in rows])
    ratio = rows[1].flops_per_step / rows[0].flops_per_step
    findings.append(f"rtrl flops slope vs H {slope:.3f}, 4->8 ratio {ratio:.2f}")
    if not (3.7 <= slope <= 4.2 and 14 <= ratio <= 18):
        failures.append("rtrl flops scaling")

    width, depth = 4, 2
    eprop = run_sweep(["deep_eprop"], [width], [depth], [4, 64, 256], seed=seed, timed=False)
    peaks = {r.peak_trace_values for r in eprop.select("deep_eprop")}
    findings.append(f"deep_eprop peak trace values over T {sorted(peaks)}")
    if peaks != {depth * width * width}:
        failures.append("eprop trace storage")

    bptt = run_sweep(["bptt"], [width], [depth], [8, 16], seed=seed, timed=False)
    rows = sorted(bptt.select("bptt"), key=lambda r: r.T)
    ratio = rows[1].stored_activation_values / rows[0].stored_activation_values
    findings.append(f"bptt stored activations ratio for doubled T {ratio:.3f}")
    if not 1.9 <= ratio <= 2.1:
        failures.append("bptt activation storage")

    deep = run_sweep(["deep_rtrl"], [width], [1, 2, 4], [4], seed=seed, timed=False)
    rows = sorted(deep.select("deep_rtrl"), key=lambda r: r.L)
    slope = fit_slope([r.L for r in rows], [r.peak_trace_values for r in rows])
    findings.append(f"deep_rtrl trace storage slope vs L {slope:.3f}")
    if not 0.9 <= slope <= 1.1:
        failures.append("deep_rtrl trace storage")

    detail = "; ".join(findings)
    if failures:
        detail = f"failed: {', '.join(failures)}; {detail}"
    return Check("complexity", not failures, instances=4, detail=detail)


def _engine_factories(mode: TraceMode = None) -> list:
    return [
        ("rtrl/deep_rtrl", lambda spec, params: DeepRTRL(spec, params)),
        ("eprop/deep_eprop", lambda spec, params: DeepEprop(spec, params, mode)),
    ]


def online_trace_mismatch(make_engine, spec, params: ParameterSet, inputs, targets) -> float:
    '''
    **Purpose:**
    - Largest trace difference between feeding an episode through ``run`` and
      stepping it by hand, plus between a full run stopped at step k and a run on
      the first k inputs only. Zero when the engine honours the online contract.
    '''

    graph = spec.as_graph()
    inputs = input_rows(graph, inputs)
    targets = target_rows(graph, targets, inputs.shape[0])
    mask = loss_steps(graph, inputs.shape[0])
    length = inputs.shape[0]
    cut = max(1, length // 2)

    batched = make_engine(spec, params)
    batched.run(inputs, targets)

    streamed = make_engine(spec, params)
    streamed.reset()
    snapshot = None
    for t in range(length):
        streamed.step(inputs[t], targets[t] if mask[t] else None)
        if t + 1 == cut:
            snapshot = {gid: streamed.traces(gid) for gid in streamed.traced_groups}

    prefix = make_engine(spec, params)
    prefix.run(inputs[:cut], targets[:cut])

    worst = 0.0
    for gid in batched.traced_groups:
        for node, trace in batched.traces(gid).items():
            if not np.array_equal(trace, streamed.traces(gid)[node]):
                worst = max(worst, float(np.max(np.abs(trace - streamed.traces(gid)[node]))) or np.inf)
        for node, trace in prefix.traces(gid).items():
            if not np.array_equal(trace, snapshot[gid][node]):
                worst = max(worst, float(np.max(np.abs(trace - snapshot[gid][node]))) or np.inf)
    return worst


def check_online_contract(seed: int, quick: bool, tolerance: float) -> Check:
    '''Streamed, batched and prefix-truncated runs leave bitwise identical traces.'''

    rng = np.random.default_rng(seed)
    worst = _Worst()
    for _ in range(2 if quick else 5):
        cases = [
            ("single layer", random_chain_instance(int(rng.integers(2 ** 31)), 1, 4, 6), TraceMode.DIAG_HOME_DENSE_ABOVE),
            ("chain", random_chain_instance(int(rng.integers(2 ** 31)), 3, 4, 6), TraceMode.DIAG_HOME_DENSE_ABOVE),
            ("chain", random_chain_instance(int(rng.integers(2 ** 31)), 3, 3, 6, equal_widths=True),
             TraceMode.DIAG_EVERYWHERE),
            ("DAG", random_dag_instance(int(rng.integers(2 ** 31))), TraceMode.DIAG_HOME_DENSE_ABOVE),
        ]
        for label, inst, mode in cases:
            for name, factory in _engine_factories(mode):
                error = online_trace_mismatch(factory, inst.spec, inst.params, inst.inputs, inst.targets)
                worst.add(error, f"{name} ({mode.value}) on {label} {_describe(inst)}")
    return worst.check("online_contract", 0.0)


BATTERY = (
    ("deep_rtrl_vs_bptt", check_deep_rtrl_exact, "deep_rtrl"),
    ("bptt_vs_finite_diff", check_finite_diff, "finite_diff"),
    ("bptt_vs_paths", check_path_sum, "paths"),
    ("path_counts", check_path_counts, None),
    ("eprop_exact_regimes", check_eprop_exact, "eprop"),
    ("eprop_alignment", check_eprop_alignment, None),
    ("complexity", check_complexity, None),
    ("online_contract", check_online_contract, None),
)


def run_battery(seed: int = 0, quick: bool = False, tolerances: dict = None, workers: int = 1) -> list:
    '''
    **Purpose:**
    - Run the built-in battery of random small instances.

    **Args:**
    - ``seed (int)``: Master seed; every check draws its instances from it.
    - ``quick (bool)``: Same checks over fewer instances.
    - ``tolerances (dict | None)``: Overrides of ``DEFAULT_TOLERANCES``.
    - ``workers (int)``: Checks run in that many processes when > 1.

    **Returns:**
    - ``list[Check]``: In battery order.
    '''

    tolerances = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    jobs = [(fn, (seed, quick, tolerances[key] if key else None)) for _, fn, key in BATTERY]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(fn, *args) for fn, args in jobs]
            checks = [future.result() for future in futures]
    else:
        checks = [fn(*args) for fn, args in jobs]
    for check in checks:
        _log_check(check)
    return checks


def spec_instance(spec, seed: int, length: int, params: ParameterSet = None) -> Instance:
    rng = np.random.default_rng(seed)
    inputs, targets = _draw_data(rng, spec, length)
    return Instance(spec, params if params is not None else init_params(spec, seed), inputs, targets)


def verify_spec(spec, seed: int = 0, length: int = 5, tolerances: dict = None, params: ParameterSet = None) -> list:
    '''
    **Purpose:**
    - Cross-check every engine and oracle on the user's spec over one seeded episode
      of ``length`` steps. Finite differences and path enumeration are skipped (not
      failed) when the spec is too large for them; E-prop alignment is informational.

    **Returns:**
    - ``list[Check]``: Checks prefixed with ``spec_``.
    '''

    tolerances = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    inst = spec_instance(spec, seed, length, params)
    case = f"spec seed {seed}, T={length}"
    checks = []

    reference = bptt_gradient(spec, inst.params, inst.inputs, inst.targets)

    worst = _Worst()
    worst.add(relative_error(deep_rtrl_episode(spec, inst.params, inst.inputs, inst.targets), reference), case)
    checks.append(worst.check("spec_deep_rtrl_vs_bptt", tolerances["deep_rtrl"]))

    n_params = sum(spec.as_graph().group(gid).size for gid in spec.as_graph().tracked_groups)
    if n_params > SPEC_FD_CAP:
        checks.append(Check("spec_bptt_vs_finite_diff", True, skipped=True,
                            detail=f"{n_params} tracked parameters exceed {SPEC_FD_CAP}"))
    else:
        worst = _Worst()
        worst.add(relative_error(reference, finite_diff_gradient(spec, inst.params, inst.inputs, inst.targets)), case)
        checks.append(worst.check("spec_bptt_vs_finite_diff", tolerances["finite_diff"]))

    try:
        _, summed = enumerate_gradient_paths(spec, inst.params, inst.inputs, inst.targets, cap=SPEC_PATH_CAP)
    except ResourceLimitError as e:
        checks.append(Check("spec_bptt_vs_paths", True, skipped=True, detail=str(e)))
    else:
        worst = _Worst()
        worst.add(relative_error(summed, reference), case)
        checks.append(worst.check("spec_bptt_vs_paths", tolerances["paths"]))

    for mode in TraceMode:
        name = f"spec_eprop_alignment_{mode.value}"
        try:
            approx = deep_eprop_episode(spec, inst.params, inst.inputs, inst.targets, mode)
        except SpecError as e:
            checks.append(Check(name, True, required=False, skipped=True, detail=str(e)))
            continue
        report = gradient_alignment(approx, reference)
        checks.append(Check(name, True, required=False, worst_error=report.relative_l2, instances=1,
                            detail=f"cosine {report.cosine:.6f}, relative L2 {report.relative_l2:.3e}"))

    worst = _Worst()
    worst.add(online_trace_mismatch(lambda s, p: DeepRTRL(s, p), spec, inst.params, inst.inputs, inst.targets),
              "deep_rtrl")
    worst.add(online_trace_mismatch(lambda s, p: DeepEprop(s, p), spec, inst.params, inst.inputs, inst.targets),
              "deep_eprop")
    checks.append(worst.check("spec_online_contract", 0.0))

    for check in checks:
        _log_check(check)
    return checks


def _log_check(check: Check) -> None:
    if check.skipped:
        logger.info(f"{check.name}: skipped ({check.detail})")
    elif check.passed:
        logger.info(f"{check.name}: ok ({check.detail})")
    elif check.required:
        logger.error(f"{check.name}: FAILED ({check.detail})")
    else:
        logger.warning(f"{check.name}: {check.detail}")


def failed_checks(checks: list) -> list:
    return [check.name for check in checks if check.required and not check.passed]
