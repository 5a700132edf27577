'''
@description:
- Subcommand drivers behind ``deep-eprop``. Each takes the parsed arguments and
  the environment settings, writes its artifacts under ``--out`` and returns the
  exit code; failures surface as exceptions that ``main`` maps to exit codes.
'''

import dataclasses
import logging
import os

import numpy as np

from .bench import emit_scaling_report, run_sweep
from .errors import VerificationError
from .network import TraceMode, init_params, load_checkpoint, load_spec, save_checkpoint
from .oracles import enumerate_gradient_paths
from .trainer import TaskKind, TrainConfig, task_stream, train, write_metrics_csv
from .utils.report_utils import render_template, timestamp, write_json, write_text
from .verify import failed_checks, resolve_tolerances, run_battery, verify_spec

logger = logging.getLogger(__name__)


def with_trace_mode(spec, trace_mode: str = None):
    '''Copy of ``spec`` using ``trace_mode``; validation reruns, so width mismatches raise ``SpecError``.'''
    if trace_mode is None:
        return spec
    return dataclasses.replace(spec, trace_mode=TraceMode(trace_mode))


def resolve_seed(args, spec=None) -> int:
    if args.seed is not None:
        return args.seed
    return spec.as_graph().seed if spec is not None else 0


def task_params(kind: TaskKind, spec, length: int, delay: int) -> dict:
    '''
    **Purpose:**
    - Task parameters matching the spec's input and readout widths.

    **Raises:**
    - ``ValueError``: If the task cannot be fed to the spec.
    '''

    graph = spec.as_graph()
    kind = TaskKind(kind)
    if kind is TaskKind.TEMPORAL_XOR:
        if graph.input_dim != 2 or graph.readout_dim != 1:
            raise ValueError(f"temporal_xor needs input_dim 2 and readout_dim 1, the spec has "
                             f"{graph.input_dim} and {graph.readout_dim}")
        return {"length": length}
    if graph.readout_dim != graph.input_dim:
        raise ValueError(f"{kind.value} needs readout_dim == input_dim, the spec has "
                         f"{graph.readout_dim} and {graph.input_dim}")
    if kind is TaskKind.DELAYED_COPY:
        return {"length": length, "delay": delay, "n_symbols": graph.input_dim}
    return {"length": length, "input_dim": graph.input_dim}


def run_verify(args, settings) -> int:
    '''
    **Purpose:**
    - Run the spec checks (when ``--spec`` is given) and the built-in battery, then
      write ``verify_report.json`` and ``verify_report.md``.

    **Raises:**
    - ``VerificationError``: If a required check failed (after the reports are written).
    - ``SpecError``: If the spec or checkpoint is invalid.
    '''

    tolerances = resolve_tolerances(args.tolerance)
    if args.steps < 1:
        raise ValueError(f"--steps must be >= 1, got {args.steps}")
    if args.checkpoint and not args.spec:
        raise ValueError("--checkpoint needs --spec")

    checks = []
    spec = None
    if args.spec:
        spec = with_trace_mode(load_spec(args.spec), args.trace_mode)
    seed = resolve_seed(args, spec)
    if spec is not None:
        params = load_checkpoint(args.checkpoint, spec) if args.checkpoint else None
        logger.info(f"Verifying {args.spec} over {args.steps} steps with seed {seed}")
        checks += verify_spec(spec, seed, args.steps, tolerances, params)

    logger.info(f"Running the {'quick' if args.quick else 'full'} battery with {settings.threads} worker(s)")
    checks += run_battery(seed, args.quick, tolerances, settings.threads)

    failed = failed_checks(checks)
    report = {
        "generated_at": timestamp(),
        "spec": args.spec,
        "seed": seed,
        "quick": args.quick,
        "tolerances": tolerances,
        "passed": not failed,
        "checks": [dataclasses.asdict(check) for check in checks],
    }
    write_json(report, os.path.join(args.out, "verify_report.json"))
    write_text(render_template("verify_report.md.j2", **report), os.path.join(args.out, "verify_report.md"))

    if failed:
        raise VerificationError(failed)
    logger.info(f"All {len(checks)} checks passed")
    return 0


def run_train(args, settings) -> int:
    '''
    **Purpose:**
    - Train the spec's tracked groups on a synthetic task; writes ``metrics.csv`` and
      ``params.ckpt``.

    **Raises:**
    - ``DivergenceError``: If the loss stops being finite.
    - ``ValueError``: Invalid flag combinations (e.g. online updates with BPTT).
    '''

    spec = with_trace_mode(load_spec(args.spec), args.trace_mode)
    seed = resolve_seed(args, spec)
    config = TrainConfig(
        algorithm=args.algorithm,
        trace_mode=spec.as_graph().trace_mode,
        learning_rate=args.learning_rate,
        episodes=args.episodes,
        seed=seed,
        update_timing=args.update_timing,
        compare_to_bptt=args.compare_bptt,
        log_every=args.log_every,
    )
    params = load_checkpoint(args.checkpoint, spec) if args.checkpoint else init_params(spec, seed)
    tasks = task_stream(args.task, task_params(args.task, spec, args.task_length, args.delay), seed, args.task_pool)

    logger.info(f"Training {args.spec} with {config.algorithm.value} on {args.task} for {config.episodes} episodes")
    result = train(spec, config, tasks, params)

    write_metrics_csv(result.metrics, os.path.join(args.out, "metrics.csv"))
    save_checkpoint(result.params, os.path.join(args.out, "params.ckpt"))
    tail = result.metrics[-min(len(result.metrics), 100):]
    logger.info(f"Final mean loss over the last {len(tail)} episodes: {np.mean([row.loss for row in tail]):.5f}")
    return 0


def run_bench(args, settings) -> int:
    '''
    **Purpose:**
    - Sweep the requested algorithms over H, L and T; writes ``scaling.csv`` and
      ``scaling_slopes.json``.
    '''

    seed = resolve_seed(args, load_spec(args.spec) if args.spec else None)
    workers = settings.threads if args.parallel else 1
    result = run_sweep(args.algorithms, args.hidden, args.depth, args.length, seed=seed, workers=workers,
                       timed=not (args.no_timing or args.parallel))
    _, fits, notices = emit_scaling_report(result, os.path.join(args.out, "scaling.csv"))
    write_json({"fits": fits, "notices": notices}, os.path.join(args.out, "scaling_slopes.json"))
    for fit in fits:
        logger.info(f"{fit['algorithm']} {fit['metric']} vs {fit['varied']} at {fit['fixed']}: slope {fit['slope']:.3f}")
    return 0


def run_paths(args, settings) -> int:
    '''
    **Purpose:**
    - Enumerate every gradient path of one seeded episode of ``--steps`` steps and
      write them to ``paths.txt``, one per line, after a ``#`` summary line.

    **Raises:**
    - ``ResourceLimitError``: If there are more paths than the enumeration cap.
    '''

    if args.steps < 1:
        raise ValueError(f"--steps must be >= 1, got {args.steps}")
    spec = load_spec(args.spec)
    graph = spec.as_graph()
    seed = resolve_seed(args, spec)
    rng = np.random.default_rng(seed)
    inputs = rng.standard_normal((args.steps, graph.input_dim))
    targets = rng.standard_normal((args.steps, graph.readout_dim))

    paths, gradient = enumerate_gradient_paths(spec, init_params(spec, seed), inputs, targets)
    lines = [f"# {len(paths)} gradient paths over {args.steps} steps for {', '.join(graph.tracked_groups)}"]
    lines += [f"{path.describe()}\t|contribution| = {np.linalg.norm(path.value):.6e}" for path in paths]
    write_text("\n".join(lines) + "\n", os.path.join(args.out, "paths.txt"))
    logger.info(f"Wrote {len(paths)} paths; gradient norm {np.sqrt(sum(np.sum(g * g) for g in gradient.values())):.6e}")
    return 0


COMMANDS = {
    "verify": run_verify,
    "train": run_train,
    "bench": run_bench,
    "paths": run_paths,
}
