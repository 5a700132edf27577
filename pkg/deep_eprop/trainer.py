'''
@description:
- Synthetic sequence tasks, the episode training loop (plain gradient descent,
  updates at episode end or online) and gradient-alignment diagnostics.
'''

import csv
import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DivergenceError, ShapeError
from .eprop import DeepEprop
from .linalg import OpCounter
from .network import ParameterSet, TraceMode, init_params, input_rows, loss_steps, rollout, target_rows
from .oracles import bptt_from_record, enumerate_gradient_paths
from .rtrl import DeepRTRL

NORM_FLOOR = 1e-12


class TaskKind(str, Enum):
    DELAYED_COPY = "delayed_copy"
    TEMPORAL_XOR = "temporal_xor"
    PATTERN_SUM = "pattern_sum"


class Algorithm(str, Enum):
    BPTT = "bptt"
    RTRL = "rtrl"
    DEEP_RTRL = "deep_rtrl"
    EPROP = "eprop"
    DEEP_EPROP = "deep_eprop"
    PATH_SUM = "path_sum"


class UpdateTiming(str, Enum):
    EPISODE_END = "episode_end"
    ONLINE = "online"


FORWARD_ALGORITHMS = (Algorithm.RTRL, Algorithm.DEEP_RTRL, Algorithm.EPROP, Algorithm.DEEP_EPROP)


@dataclass(frozen=True)
class TaskInstance:
    '''
    **Purpose:**
    - One episode of a synthetic task.

    **Attributes:**
    - ``kind (TaskKind)``: Task family.
    - ``inputs (np.ndarray)``: (T, input_dim).
    - ``targets (np.ndarray)``: (T, readout_dim); row T-1 is the final target, earlier
      rows are the per-step targets used when every step carries a loss.
    - ``seed (int)``: Seed the instance was drawn with.
    '''

    kind: TaskKind
    inputs: np.ndarray = field(repr=False)
    targets: np.ndarray = field(repr=False)
    seed: int

    @property
    def final_target(self) -> np.ndarray:
        return self.targets[-1]


@dataclass(frozen=True)
class TrainConfig:
    '''
    **Purpose:**
    - Settings of one training run.

    **Raises:**
    - ``ValueError``: Negative learning rate, fewer than one episode, or online updates
      with an algorithm that only produces a gradient after the episode.
    '''

    algorithm: Algorithm = Algorithm.DEEP_EPROP
    trace_mode: TraceMode = None
    learning_rate: float = 0.1
    episodes: int = 100
    seed: int = 0
    update_timing: UpdateTiming = UpdateTiming.EPISODE_END
    compare_to_bptt: bool = False
    log_every: int = 100

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if self.trace_mode is not None:
            object.__setattr__(self, "trace_mode", TraceMode(self.trace_mode))
        object.__setattr__(self, "update_timing", UpdateTiming(self.update_timing))
        if not self.learning_rate >= 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.episodes < 1:
            raise ValueError(f"episodes must be >= 1, got {self.episodes}")
        if self.update_timing is UpdateTiming.ONLINE and self.algorithm not in FORWARD_ALGORITHMS:
            raise ValueError(f"online updates need a forward-mode algorithm, not {self.algorithm.value}")


@dataclass(frozen=True)
class GradientReport:
    '''
    **Purpose:**
    - Agreement between two gradients.

    **Attributes:**
    - ``cosine (float)``: Cosine similarity over all groups concatenated, in [-1, 1].
    - ``relative_l2 (float)``: ``||g1 - g2|| / max(||g2||, floor)``.
    - ``per_group (dict)``: group id -> ``(cosine, relative_l2)``.
    '''

    cosine: float
    relative_l2: float
    per_group: dict


@dataclass(frozen=True)
class MetricsRow:
    episode: int
    loss: float
    cosine_vs_bptt: float = None
    rel_l2_vs_bptt: float = None


@dataclass
class TrainResult:
    metrics: list
    params: ParameterSet


def generate_task(kind: TaskKind, params: dict, seed: int) -> TaskInstance:
    '''
    **Purpose:**
    - Draw one task instance deterministically from ``seed``.

    **Args:**
    - ``kind (TaskKind)``: ``delayed_copy``, ``temporal_xor`` or ``pattern_sum``.
    - ``params (dict)``: Task parameters:
        - ``length`` (all kinds): number of timesteps T.
        - ``delay``, ``n_symbols`` (delayed_copy): the target at T is the symbol seen at T - delay.
        - ``gap`` (temporal_xor, default 1): steps between the two flagged bits; the
          second one arrives on the last step.
        - ``distractors`` (temporal_xor, default False): unflagged steps carry random
          bits instead of zeros.
        - ``flagged_bits`` (temporal_xor, optional): pins the two flagged bits.
        - ``input_dim`` (pattern_sum, default 2).

    **Returns:**
    - ``TaskInstance``

    **Raises:**
    - ``ValueError``: If the parameters are invalid for ``kind``.

    **Example:**
    ```python
    >>> task = generate_task("temporal_xor", {"length": 10, "flagged_bits": (1, 0)}, seed=3)
    >>> task.final_target
    ```
    Example Output:
    - array([1.])
    '''

    kind = TaskKind(kind)
    params = dict(params or {})
    length = params.get("length", 10)
    rng = np.random.default_rng(seed)

    if kind is TaskKind.DELAYED_COPY:
        delay = params.get("delay", 0)
        n_symbols = params.get("n_symbols", 4)
        if delay < 0:
            raise ValueError(f"delay must be >= 0, got {delay}")
        if length < delay + 1:
            raise ValueError(f"length must be >= delay + 1, got length {length} and delay {delay}")
        if n_symbols < 2:
            raise ValueError(f"n_symbols must be >= 2, got {n_symbols}")
        symbols = rng.integers(0, n_symbols, size=length)
        inputs = np.eye(n_symbols)[symbols]
        targets = np.zeros((length, n_symbols))
        for t in range(delay, length):
            targets[t] = inputs[t - delay]
        return TaskInstance(kind, inputs, targets, seed)

    if kind is TaskKind.TEMPORAL_XOR:
        gap = params.get("gap", 1)
        if length < 3:
            raise ValueError(f"temporal_xor needs length >= 3, got {length}")
        if not 1 <= gap <= length - 1:
            raise ValueError(f"gap must be in 1..{length - 1}, got {gap}")
        bits = rng.integers(0, 2, size=length)
        # the second flag sits on the last (scored) step
        flags = np.array([length - 1 - gap, length - 1])
        if "flagged_bits" in params:
            pinned = tuple(params["flagged_bits"])
            if len(pinned) != 2 or any(b not in (0, 1) for b in pinned):
                raise ValueError(f"flagged_bits must be two bits, got {pinned}")
            bits[flags] = pinned
        inputs = np.zeros((length, 2))
        if params.get("distractors", False):
            inputs[:, 0] = 2.0 * bits - 1.0
        else:
            inputs[flags, 0] = 2.0 * bits[flags] - 1.0
        inputs[flags, 1] = 1.0
        answer = float(bits[flags[0]] ^ bits[flags[1]])
        targets = np.zeros((length, 1))
        targets[flags[1]:, 0] = answer
        return TaskInstance(kind, inputs, targets, seed)

    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    width = params.get("input_dim", 2)
    if width < 1:
        raise ValueError(f"input_dim must be >= 1, got {width}")
    inputs = rng.uniform(-1.0, 1.0, size=(length, width))
    targets = np.cumsum(inputs, axis=0) / length
    return TaskInstance(kind, inputs, targets, seed)


def task_stream(kind: TaskKind, params: dict, seed: int, pool: int = None):
    '''
    Endless stream of instances drawn with seeds ``seed``, ``seed + 1``, ...; with ``pool``
    the seeds cycle through ``seed .. seed + pool - 1`` (a fixed training set).
    '''

    if pool is not None and pool < 1:
        raise ValueError(f"pool must be >= 1, got {pool}")

    def stream():
        offset = 0
        while True:
            yield generate_task(kind, params, seed + (offset % pool if pool else offset))
            offset += 1

    return stream()


def gradient_alignment(g1: dict, g2: dict, floor: float = NORM_FLOOR) -> GradientReport:
    '''
    **Purpose:**
    - Compare two gradient sets group by group and as one concatenated vector.
      A cosine involving an all-zero gradient is 1 when both are zero and 0 otherwise.

    **Raises:**
    - ``ShapeError``: If the groups or their shapes differ.
    '''

    if set(g1) != set(g2):
        raise ShapeError(f"gradient sets cover different groups: {sorted(g1)} vs {sorted(g2)}")
    for gid in g1:
        if np.shape(g1[gid]) != np.shape(g2[gid]):
            raise ShapeError(f"group {gid}: shapes {np.shape(g1[gid])} and {np.shape(g2[gid])} differ")

    def compare(a: np.ndarray, b: np.ndarray) -> tuple:
        norm_a, norm_b = np.linalg.norm(a), np.linalg.norm(b)
        if norm_a == 0.0 or norm_b == 0.0:
            cosine = 1.0 if norm_a == norm_b else 0.0
        else:
            cosine = float(np.clip(np.dot(a, b) / (norm_a * norm_b), -1.0, 1.0))
        return cosine, float(np.linalg.norm(a - b) / max(norm_b, floor))

    per_group = {gid: compare(np.ravel(g1[gid]), np.ravel(g2[gid])) for gid in sorted(g1)}
    flat1 = np.concatenate([np.ravel(g1[gid]) for gid in sorted(g1)]) if g1 else np.zeros(0)
    flat2 = np.concatenate([np.ravel(g2[gid]) for gid in sorted(g2)]) if g2 else np.zeros(0)
    cosine, relative = compare(flat1, flat2)
    return GradientReport(cosine, relative, per_group)


def make_engine(algorithm: Algorithm, spec, params: ParameterSet, trace_mode: TraceMode = None,
                counter: OpCounter = None):
    '''Forward-mode engine for ``algorithm``; single-layer variants reject deeper specs.'''

    algorithm = Algorithm(algorithm)
    if algorithm in (Algorithm.RTRL, Algorithm.EPROP) and len(spec.as_graph().nodes) != 1:
        raise ValueError(f"{algorithm.value} is single-layer only; use deep_{algorithm.value}")
    if algorithm in (Algorithm.RTRL, Algorithm.DEEP_RTRL):
        return DeepRTRL(spec, params, counter)
    if algorithm in (Algorithm.EPROP, Algorithm.DEEP_EPROP):
        return DeepEprop(spec, params, trace_mode, counter)
    raise ValueError(f"{algorithm.value} has no forward-mode engine")


def episode_gradient(algorithm: Algorithm, spec, params: ParameterSet, inputs, targets,
                     trace_mode: TraceMode = None, counter: OpCounter = None) -> tuple:
    '''
    **Purpose:**
    - Gradient of the tracked groups and the episode loss under ``algorithm``.

    **Returns:**
    - ``tuple[dict, float]``: ``(gradient, loss)``.
    '''

    algorithm = Algorithm(algorithm)
    if algorithm is Algorithm.BPTT:
        record = rollout(spec, params, inputs, targets, counter=counter)
        return bptt_from_record(spec, params, record, counter=counter), record.total_loss
    if algorithm is Algorithm.PATH_SUM:
        _, gradient = enumerate_gradient_paths(spec, params, inputs, targets)
        return gradient, rollout(spec, params, inputs, targets).total_loss
    engine = make_engine(algorithm, spec, params, trace_mode, counter)
    gradient = engine.run(inputs, targets)
    return gradient, engine.loss


def sgd_update(params: ParameterSet, gradient: dict, learning_rate: float) -> ParameterSet:
    '''``theta <- theta - lr * g`` for every group in ``gradient``; no momentum.'''
    return params.replace({gid: params[gid] - learning_rate * grad for gid, grad in gradient.items()})


def _online_episode(config: TrainConfig, spec, params: ParameterSet, task: TaskInstance) -> tuple:
    engine = make_engine(config.algorithm, spec, params, config.trace_mode)
    inputs = input_rows(spec, task.inputs)
    targets = target_rows(spec, task.targets, inputs.shape[0])
    mask = loss_steps(spec, inputs.shape[0])
    applied = {gid: np.zeros_like(grad) for gid, grad in engine.gradient().items()}
    for t in range(inputs.shape[0]):
        engine.step(inputs[t], targets[t] if mask[t] else None)
        total = engine.gradient()
        delta = {gid: total[gid] - applied[gid] for gid in total}
        applied = total
        params = sgd_update(params, delta, config.learning_rate)
        engine.set_params(params)
    return params, engine.loss


def train(spec, config: TrainConfig, tasks, params: ParameterSet = None) -> TrainResult:
    '''
    **Purpose:**
    - Train the tracked groups of ``spec`` for ``config.episodes`` episodes drawn from ``tasks``.
      With ``episode_end`` timing parameters are frozen during an episode and updated
      once after it; with ``online`` timing each step's gradient increment is applied
      immediately, so later traces mix old and new parameters.

    **Args:**
    - ``spec``: Network spec.
    - ``config (TrainConfig)``: Run settings.
    - ``tasks (iterable)``: Task instances, e.g. ``task_stream(...)``.
    - ``params (ParameterSet | None)``: Starting point; drawn from ``config.seed`` when ``None``.

    **Returns:**
    - ``TrainResult``: One ``MetricsRow`` per episode plus the final parameters.

    **Raises:**
    - ``DivergenceError``: If an episode's loss is not finite.
    - ``ValueError``: If ``tasks`` runs out before ``config.episodes``.
    '''

    logger = logging.getLogger(__name__)
    params = params if params is not None else init_params(spec, config.seed)
    stream = iter(tasks)
    metrics = []

    for episode in range(config.episodes):
        try:
            task = next(stream)
        except StopIteration:
            raise ValueError(f"task stream ended after {episode} episodes, {config.episodes} requested")

        cosine = rel_l2 = None
        if config.compare_to_bptt:
            reference, _ = episode_gradient(Algorithm.BPTT, spec, params, task.inputs, task.targets)
            if config.algorithm is Algorithm.BPTT:
                candidate = reference
            else:
                candidate, _ = episode_gradient(config.algorithm, spec, params, task.inputs, task.targets,
                                                config.trace_mode)
            report = gradient_alignment(candidate, reference)
            cosine, rel_l2 = report.cosine, report.relative_l2

        if config.update_timing is UpdateTiming.ONLINE:
            params, loss = _online_episode(config, spec, params, task)
        else:
            gradient, loss = episode_gradient(config.algorithm, spec, params, task.inputs, task.targets,
                                              config.trace_mode)
            if np.isfinite(loss):
                params = sgd_update(params, gradient, config.learning_rate)

        if not np.isfinite(loss):
            raise DivergenceError(episode, loss)
        metrics.append(MetricsRow(episode, float(loss), cosine, rel_l2))

        if config.log_every and (episode + 1) % config.log_every == 0:
            recent = np.mean([row.loss for row in metrics[-config.log_every:]])
            logger.info(f"{config.algorithm.value}: episode {episode + 1}/{config.episodes}, mean loss {recent:.5f}")

    return TrainResult(metrics, params)


def write_metrics_csv(rows: list, path: str) -> None:
    '''Columns ``episode, loss, cosine_vs_bptt, rel_l2_vs_bptt``; alignment cells are empty when not measured.'''

    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["episode", "loss", "cosine_vs_bptt", "rel_l2_vs_bptt"])
        for row in rows:
            writer.writerow([
                row.episode,
                repr(row.loss),
                "" if row.cosine_vs_bptt is None else repr(row.cosine_vs_bptt),
                "" if row.rel_l2_vs_bptt is None else repr(row.rel_l2_vs_bptt),
            ])
