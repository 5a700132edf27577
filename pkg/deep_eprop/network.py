'''
@description:
- Stacked-chain and DAG recurrent network models: spec types, spec file parsing,
  parameter initialization, forward rollouts and parameter checkpoints.
'''

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path

import networkx as nx
import numpy as np

from .errors import CycleError, ShapeError, SpecError
from .linalg import ActivationKind, OpCounter, activation_eval, as_matrix

logger = logging.getLogger(__name__)

READOUT_NODE = "y"
LOSS_NODE = "L"
READOUT_GROUP = "W_out"


class LossTimesteps(str, Enum):
    FINAL_ONLY = "final_only"
    EVERY_STEP = "every_step"


class TraceMode(str, Enum):
    '''Which Jacobians the deep E-prop recursion restricts to their diagonal.'''

    DIAG_HOME_DENSE_ABOVE = "diag_home_dense_above"
    DIAG_EVERYWHERE = "diag_everywhere"


class GroupKind(str, Enum):
    INPUT_WEIGHTS = "input_weights"
    RECURRENT_WEIGHTS = "recurrent_weights"
    CROSS_LAYER_WEIGHTS = "cross_layer_weights"
    READOUT_WEIGHTS = "readout_weights"
    BIAS = "bias"


@dataclass(frozen=True)
class LayerSpec:
    layer_id: str
    hidden_dim: int
    activation: ActivationKind = ActivationKind.TANH
    has_recurrence: bool = True


@dataclass(frozen=True)
class EdgeSpec:
    source: str
    target: str


@dataclass(frozen=True)
class GroupInfo:
    '''
    **Purpose:**
    - Static description of one parameter group.

    **Attributes:**
    - ``group_id (str)``: Identifier such as ``l1.W_in`` or ``A->B.W``.
    - ``kind (GroupKind)``: What the group connects.
    - ``home (str)``: Node whose pre-activation the group feeds (the output node for the readout).
    - ``source (str | None)``: Node whose state the group multiplies; ``None`` for input weights and biases.
    - ``shape (tuple)``: Matrix shape.
    '''

    group_id: str
    kind: GroupKind
    home: str
    source: str
    shape: tuple

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]


@dataclass(frozen=True)
class GraphSpec:
    '''
    **Purpose:**
    - A DAG of recurrent nodes. Each node sums its own recurrent term, one weighted
      term per incoming edge, the external input (input nodes only) and a bias,
      then applies its activation.

    The constructor validates every invariant and raises ``SpecError`` (or
    ``CycleError``) on violation. Chains are represented as path graphs; see
    ``NetworkSpec.as_graph``.
    '''

    input_dim: int
    nodes: tuple
    edges: tuple
    input_nodes: tuple
    output_node: str
    readout_dim: int
    loss_timesteps: LossTimesteps = LossTimesteps.FINAL_ONLY
    tracked_groups: tuple = ()
    trace_mode: TraceMode = TraceMode.DIAG_HOME_DENSE_ABOVE
    seed: int = 0
    loss_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(EdgeSpec(*e) if not isinstance(e, EdgeSpec) else e for e in self.edges))
        object.__setattr__(self, "input_nodes", tuple(self.input_nodes))
        object.__setattr__(self, "loss_timesteps", LossTimesteps(self.loss_timesteps))
        object.__setattr__(self, "trace_mode", TraceMode(self.trace_mode))
        if not self.tracked_groups:
            object.__setattr__(self, "tracked_groups", (f"{self.input_nodes[0]}.W_in",) if self.input_nodes else ())
        object.__setattr__(self, "tracked_groups", tuple(self.tracked_groups))
        self._validate()

    def _validate(self) -> None:
        if self.input_dim < 1:
            raise SpecError("input_dim must be >= 1", "input_dim")
        if self.readout_dim < 1:
            raise SpecError("readout_dim must be >= 1", "readout_dim")
        if not np.isfinite(self.loss_scale):
            raise SpecError("loss_scale must be finite", "loss_scale")
        if not self.nodes:
            raise SpecError("at least one layer or node is required", "nodes")

        seen = set()
        for index, layer in enumerate(self.nodes):
            if layer.layer_id in seen:
                raise SpecError(f"duplicate id {layer.layer_id!r}", f"nodes[{index}].id")
            if layer.layer_id in (READOUT_NODE, LOSS_NODE):
                raise SpecError(f"id {layer.layer_id!r} is reserved", f"nodes[{index}].id")
            if layer.hidden_dim < 1:
                raise SpecError("hidden_dim must be >= 1", f"nodes[{index}].hidden_dim")
            seen.add(layer.layer_id)

        edge_set = set()
        for index, edge in enumerate(self.edges):
            for end in (edge.source, edge.target):
                if end not in seen:
                    raise SpecError(f"edge refers to unknown node {end!r}", f"edges[{index}]")
            if (edge.source, edge.target) in edge_set:
                raise SpecError(f"duplicate edge {edge.source}->{edge.target}", f"edges[{index}]")
            edge_set.add((edge.source, edge.target))

        graph = nx.DiGraph()
        graph.add_nodes_from(layer.layer_id for layer in self.nodes)
        graph.add_edges_from((e.source, e.target) for e in self.edges)
        try:
            cycle = nx.find_cycle(graph)
        except nx.NetworkXNoCycle:
            cycle = None
        if cycle:
            raise CycleError([u for u, _ in cycle], "edges")

        if not self.input_nodes:
            raise SpecError("at least one input node is required", "input_nodes")
        for node in self.input_nodes:
            if node not in seen:
                raise SpecError(f"unknown input node {node!r}", "input_nodes")
        if self.output_node not in seen:
            raise SpecError(f"unknown output node {self.output_node!r}", "output_node")

        reachable = set(self.input_nodes)
        for node in self.input_nodes:
            reachable |= nx.descendants(graph, node)
        unreachable = sorted(seen - reachable)
        if unreachable:
            raise SpecError(f"nodes not reachable from any input node: {unreachable}", "nodes")

        idle = sorted(seen - nx.ancestors(graph, self.output_node) - {self.output_node})
        if idle:
            logger.warning(f"Nodes with no path to the output node never influence the loss: {idle}")

        known = {info.group_id for info in self.groups}
        for gid in self.tracked_groups:
            if gid not in known:
                raise SpecError(f"unknown parameter group {gid!r}", "tracked_groups")

        if self.trace_mode is TraceMode.DIAG_EVERYWHERE:
            for gid in self.tracked_groups:
                info = self.group(gid)
                if info.kind is GroupKind.READOUT_WEIGHTS:
                    continue
                width = self.layer(info.home).hidden_dim
                for node in self.relevant_nodes(info.home):
                    if self.layer(node).hidden_dim != width:
                        raise SpecError(
                            f"diag_everywhere requires equal widths along the path from {info.home!r} "
                            f"to the output: {node!r} has {self.layer(node).hidden_dim}, expected {width}",
                            "trace_mode",
                        )

    def as_graph(self) -> "GraphSpec":
        return self

    @cached_property
    def graph(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(layer.layer_id for layer in self.nodes)
        graph.add_edges_from((e.source, e.target) for e in self.edges)
        return graph

    @cached_property
    def order(self) -> tuple:
        '''Topological order, ties broken by node id so declaration order never matters.'''
        return tuple(nx.lexicographical_topological_sort(self.graph))

    @cached_property
    def _layers(self) -> dict:
        return {layer.layer_id: layer for layer in self.nodes}

    def layer(self, node: str) -> LayerSpec:
        return self._layers[node]

    def preds(self, node: str) -> tuple:
        return tuple(sorted(self.graph.predecessors(node)))

    def succs(self, node: str) -> tuple:
        return tuple(sorted(self.graph.successors(node)))

    @cached_property
    def groups(self) -> tuple:
        infos = []
        for node in self.order:
            layer = self.layer(node)
            width = layer.hidden_dim
            if node in self.input_nodes:
                infos.append(GroupInfo(f"{node}.W_in", GroupKind.INPUT_WEIGHTS, node, None, (width, self.input_dim)))
            if layer.has_recurrence:
                infos.append(GroupInfo(f"{node}.W_rec", GroupKind.RECURRENT_WEIGHTS, node, node, (width, width)))
            for pred in self.preds(node):
                infos.append(GroupInfo(f"{pred}->{node}.W", GroupKind.CROSS_LAYER_WEIGHTS, node, pred,
                                       (width, self.layer(pred).hidden_dim)))
            infos.append(GroupInfo(f"{node}.b", GroupKind.BIAS, node, None, (width, 1)))
        infos.append(GroupInfo(READOUT_GROUP, GroupKind.READOUT_WEIGHTS, self.output_node, self.output_node,
                               (self.readout_dim, self.layer(self.output_node).hidden_dim)))
        return tuple(infos)

    def group(self, group_id: str) -> GroupInfo:
        for info in self.groups:
            if info.group_id == group_id:
                return info
        raise ValueError(f"unknown parameter group {group_id!r}")

    def edge_group(self, source: str, target: str) -> str:
        return f"{source}->{target}.W"

    def relevant_nodes(self, home: str) -> tuple:
        '''Nodes on a directed path from ``home`` to the output node, in topological order.'''
        if home == self.output_node:
            return (home,)
        downstream = nx.descendants(self.graph, home) | {home}
        upstream = nx.ancestors(self.graph, self.output_node) | {self.output_node}
        keep = downstream & upstream
        if home not in keep:
            return ()
        return tuple(node for node in self.order if node in keep)

    @property
    def state_size(self) -> int:
        return sum(layer.hidden_dim for layer in self.nodes)


@dataclass(frozen=True)
class NetworkSpec:
    '''
    **Purpose:**
    - A stack of recurrent layers: layer 1 reads the input, layer l reads layer l-1,
      the readout reads the top layer.

    **Example:**
    ```python
    >>> spec = NetworkSpec(input_dim=3, layers=(LayerSpec("l1", 4), LayerSpec("l2", 4)), readout_dim=1)
    >>> spec.as_graph().order
    ```
    Example Output:
    - ('l1', 'l2')
    '''

    input_dim: int
    layers: tuple
    readout_dim: int
    loss_timesteps: LossTimesteps = LossTimesteps.FINAL_ONLY
    tracked_groups: tuple = ()
    trace_mode: TraceMode = TraceMode.DIAG_HOME_DENSE_ABOVE
    seed: int = 0
    loss_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise SpecError("at least one layer is required", "layers")
        object.__setattr__(self, "loss_timesteps", LossTimesteps(self.loss_timesteps))
        object.__setattr__(self, "trace_mode", TraceMode(self.trace_mode))
        object.__setattr__(self, "tracked_groups", self.as_graph().tracked_groups)

    @cached_property
    def _graph(self) -> GraphSpec:
        ids = [layer.layer_id for layer in self.layers]
        return GraphSpec(
            input_dim=self.input_dim,
            nodes=self.layers,
            edges=tuple(EdgeSpec(a, b) for a, b in zip(ids, ids[1:])),
            input_nodes=(ids[0],),
            output_node=ids[-1],
            readout_dim=self.readout_dim,
            loss_timesteps=self.loss_timesteps,
            tracked_groups=self.tracked_groups,
            trace_mode=self.trace_mode,
            seed=self.seed,
            loss_scale=self.loss_scale,
        )

    def as_graph(self) -> GraphSpec:
        return self._graph

    @property
    def depth(self) -> int:
        return len(self.layers)


@dataclass(frozen=True)
class ParamGroup:
    group_id: str
    kind: GroupKind
    home: str
    matrix: np.ndarray = field(repr=False)


class ParameterSet:
    '''
    **Purpose:**
    - Immutable collection of ``ParamGroup`` objects keyed by group id.
      Updates go through ``replace``, which returns a new set.
    '''

    def __init__(self, groups):
        self._groups = {}
        for group in groups:
            matrix = np.array(group.matrix, dtype=np.float64)
            matrix.setflags(write=False)
            self._groups[group.group_id] = ParamGroup(group.group_id, group.kind, group.home, matrix)

    def __getitem__(self, group_id: str) -> np.ndarray:
        return self._groups[group_id].matrix

    def __contains__(self, group_id: str) -> bool:
        return group_id in self._groups

    def __iter__(self):
        return iter(self._groups.values())

    def __len__(self) -> int:
        return len(self._groups)

    def ids(self) -> list:
        return list(self._groups)

    def group(self, group_id: str) -> ParamGroup:
        return self._groups[group_id]

    def replace(self, updates: dict) -> "ParameterSet":
        groups = []
        for gid, group in self._groups.items():
            if gid in updates:
                new = np.asarray(updates[gid], dtype=np.float64)
                if new.shape != group.matrix.shape:
                    raise ShapeError(f"group {gid}: new shape {new.shape} != {group.matrix.shape}")
                group = ParamGroup(gid, group.kind, group.home, new)
            groups.append(group)
        return ParameterSet(groups)


@dataclass
class RolloutRecord:
    '''
    **Purpose:**
    - Everything one forward episode produced.

    **Attributes:**
    - ``inputs (np.ndarray)``: (T, input_dim) inputs.
    - ``states (list[dict])``: Per step, node id -> hidden state h^n_t.
    - ``preacts (list[dict])``: Per step, node id -> pre-activation.
    - ``outputs (np.ndarray)``: (T, readout_dim) readout values.
    - ``targets (np.ndarray)``: (T, readout_dim) targets (rows of disabled steps are unused).
    - ``loss_mask (np.ndarray)``: Boolean (T,), which steps contribute to the loss.
    - ``step_losses (np.ndarray)``: (T,) per-step loss, 0 where the step is disabled.
    - ``total_loss (float)``: Sum of the enabled per-step losses.
    '''

    inputs: np.ndarray
    states: list
    preacts: list
    outputs: np.ndarray
    targets: np.ndarray
    loss_mask: np.ndarray
    step_losses: np.ndarray
    total_loss: float

    @property
    def length(self) -> int:
        return len(self.states)


def parse_spec(text: str):
    '''
    **Purpose:**
    - Parse and validate a JSON spec document.

    **Args:**
    - ``text (str)``: The document. Top-level ``topology`` selects ``chain`` or ``dag``.

    **Returns:**
    - ``NetworkSpec | GraphSpec``: Fully validated spec.

    **Raises:**
    - ``SpecError``: Malformed JSON (with line and column), unknown keys, wrong types,
      dangling ids, or any violated invariant.
    - ``CycleError``: If DAG edges contain a cycle.
    '''

    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SpecError(f"malformed spec document: {e.msg}", f"line {e.lineno}, column {e.colno}")

    if not isinstance(doc, dict):
        raise SpecError("spec document must be an object", "$")

    topology = doc.get("topology", "chain")
    common = {"topology", "input_dim", "readout_dim", "loss_timesteps", "tracked_groups", "trace_mode", "seed",
              "loss_scale"}
    if topology == "chain":
        allowed = common | {"layers"}
    elif topology == "dag":
        allowed = common | {"nodes", "edges", "input_nodes", "output_node"}
    else:
        raise SpecError(f"topology must be 'chain' or 'dag', got {topology!r}", "topology")
    _reject_unknown(doc, allowed, "$")

    options = {
        "input_dim": _get_int(doc, "input_dim", "input_dim"),
        "readout_dim": _get_int(doc, "readout_dim", "readout_dim"),
        "loss_timesteps": _get_enum(doc, "loss_timesteps", LossTimesteps, LossTimesteps.FINAL_ONLY),
        "trace_mode": _get_enum(doc, "trace_mode", TraceMode, TraceMode.DIAG_HOME_DENSE_ABOVE),
        "seed": _get_int(doc, "seed", "seed", default=0, minimum=None),
        "loss_scale": float(_get_number(doc, "loss_scale", 1.0)),
    }

    key = "layers" if topology == "chain" else "nodes"
    entries = doc.get(key)
    if not isinstance(entries, list) or not entries:
        raise SpecError(f"'{key}' must be a nonempty list", key)
    layers = tuple(_parse_layer(entry, f"{key}[{i}]", f"l{i + 1}") for i, entry in enumerate(entries))

    if topology == "chain":
        draft = NetworkSpec(layers=layers, **options, tracked_groups=())
    else:
        edges = []
        raw_edges = doc.get("edges", [])
        if not isinstance(raw_edges, list):
            raise SpecError("'edges' must be a list", "edges")
        for i, edge in enumerate(raw_edges):
            if not isinstance(edge, dict):
                raise SpecError("edge must be an object with 'from' and 'to'", f"edges[{i}]")
            _reject_unknown(edge, {"from", "to"}, f"edges[{i}]")
            if not isinstance(edge.get("from"), str) or not isinstance(edge.get("to"), str):
                raise SpecError("edge needs string 'from' and 'to'", f"edges[{i}]")
            edges.append(EdgeSpec(edge["from"], edge["to"]))
        input_nodes = doc.get("input_nodes")
        if not isinstance(input_nodes, list) or not all(isinstance(n, str) for n in input_nodes):
            raise SpecError("'input_nodes' must be a list of node ids", "input_nodes")
        output_node = doc.get("output_node")
        if not isinstance(output_node, str):
            raise SpecError("'output_node' must be a node id", "output_node")
        draft = GraphSpec(nodes=layers, edges=tuple(edges), input_nodes=tuple(input_nodes),
                          output_node=output_node, **options)

    tracked = doc.get("tracked_groups")
    if tracked is None:
        return draft
    if tracked == "all":
        tracked = [info.group_id for info in draft.as_graph().groups]
    if not isinstance(tracked, list) or not tracked or not all(isinstance(g, str) for g in tracked):
        raise SpecError("'tracked_groups' must be a nonempty list of group ids or \"all\"", "tracked_groups")

    if topology == "chain":
        return NetworkSpec(layers=layers, **options, tracked_groups=tuple(tracked))
    return GraphSpec(nodes=layers, edges=draft.edges, input_nodes=draft.input_nodes,
                     output_node=draft.output_node, tracked_groups=tuple(tracked), **options)


def load_spec(path: str):
    '''Read and parse a spec file. Unreadable files raise ``SpecError``.'''

    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise SpecError(f"cannot read spec file: {e}", str(path))
    return parse_spec(text)


def _reject_unknown(doc: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise SpecError(f"unknown keys {unknown}", where)


def _get_int(doc: dict, key: str, where: str, default=None, minimum=1) -> int:
    value = doc.get(key, default)
    if value is None:
        raise SpecError(f"missing required key '{key}'", where)
    if isinstance(value, bool) or not isinstance(value, int):
        raise SpecError(f"'{key}' must be an integer", where)
    if minimum is not None and value < minimum:
        raise SpecError(f"'{key}' must be >= {minimum}", where)
    return value


def _get_number(doc: dict, key: str, default: float) -> float:
    value = doc.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SpecError(f"'{key}' must be a number", key)
    return value


def _get_enum(doc: dict, key: str, enum_type, default):
    value = doc.get(key, default)
    try:
        return enum_type(value)
    except ValueError:
        choices = ", ".join(member.value for member in enum_type)
        raise SpecError(f"'{key}' must be one of: {choices}", key)


def _parse_layer(entry, where: str, default_id: str) -> LayerSpec:
    if not isinstance(entry, dict):
        raise SpecError("layer entry must be an object", where)
    _reject_unknown(entry, {"id", "hidden_dim", "activation", "recurrent"}, where)
    layer_id = entry.get("id", default_id)
    if not isinstance(layer_id, str) or not layer_id:
        raise SpecError("'id' must be a nonempty string", f"{where}.id")
    recurrent = entry.get("recurrent", True)
    if not isinstance(recurrent, bool):
        raise SpecError("'recurrent' must be a boolean", f"{where}.recurrent")
    return LayerSpec(
        layer_id=layer_id,
        hidden_dim=_get_int(entry, "hidden_dim", f"{where}.hidden_dim"),
        activation=_get_enum(entry, "activation", ActivationKind, ActivationKind.TANH),
        has_recurrence=recurrent,
    )


def init_params(spec, seed: int) -> ParameterSet:
    '''
    **Purpose:**
    - Draw every parameter group deterministically from ``seed``.

    Weights are uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)] with fan_in the
    number of columns; biases are zero.
    '''

    graph = spec.as_graph()
    rng = np.random.default_rng(seed)
    groups = []
    for info in graph.groups:
        if info.kind is GroupKind.BIAS:
            matrix = np.zeros(info.shape)
        else:
            bound = 1.0 / np.sqrt(info.shape[1])
            matrix = rng.uniform(-bound, bound, size=info.shape)
        groups.append(ParamGroup(info.group_id, info.kind, info.home, matrix))
    return ParameterSet(groups)


def zero_states(spec) -> dict:
    graph = spec.as_graph()
    return {node: np.zeros(graph.layer(node).hidden_dim) for node in graph.order}


def forward_step(spec, params: ParameterSet, prev_states: dict, x_t) -> tuple:
    '''
    **Purpose:**
    - Advance every node by one timestep in topological order.

    **Args:**
    - ``spec``: ``NetworkSpec`` or ``GraphSpec``.
    - ``params (ParameterSet)``: Parameters.
    - ``prev_states (dict | None)``: Node id -> h^n_{t-1}; ``None`` means all zero.
    - ``x_t (array-like)``: Input vector of length ``input_dim``.

    **Returns:**
    - ``tuple[dict, dict]``: ``(new_states, preacts)`` keyed by node id.

    **Raises:**
    - ``ShapeError``: If the input or any previous state has the wrong length.
    '''

    graph = spec.as_graph()
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape != (graph.input_dim,):
        raise ShapeError(f"input has shape {x_t.shape}, expected ({graph.input_dim},)")
    if prev_states is None:
        prev_states = zero_states(graph)

    states, preacts = {}, {}
    for node in graph.order:
        layer = graph.layer(node)
        h_prev = np.asarray(prev_states[node], dtype=np.float64)
        if h_prev.shape != (layer.hidden_dim,):
            raise ShapeError(f"previous state of {node!r} has shape {h_prev.shape}, expected ({layer.hidden_dim},)")

        if layer.has_recurrence:
            a = params[f"{node}.W_rec"] @ h_prev
        else:
            a = np.zeros(layer.hidden_dim)
        for pred in graph.preds(node):
            a = a + params[graph.edge_group(pred, node)] @ states[pred]
        if node in graph.input_nodes:
            a = a + params[f"{node}.W_in"] @ x_t
        a = a + params[f"{node}.b"][:, 0]

        states[node], _ = activation_eval(layer.activation, a)
        preacts[node] = a
    return states, preacts


def readout(spec, params: ParameterSet, states: dict) -> np.ndarray:
    return params[READOUT_GROUP] @ states[spec.as_graph().output_node]


def step_loss(spec, y: np.ndarray, target: np.ndarray) -> float:
    diff = y - target
    return float(spec.as_graph().loss_scale * 0.5 * np.dot(diff, diff))


def loss_gradient(spec, y: np.ndarray, target: np.ndarray) -> np.ndarray:
    '''dL_t/dy_t of the scaled squared error.'''
    return spec.as_graph().loss_scale * (y - target)


def loss_steps(spec, length: int) -> np.ndarray:
    '''Boolean mask of the timesteps whose loss is enabled.'''
    mask = np.zeros(length, dtype=bool)
    if spec.as_graph().loss_timesteps is LossTimesteps.EVERY_STEP:
        mask[:] = True
    else:
        mask[-1] = True
    return mask


def target_rows(spec, targets, length: int) -> np.ndarray:
    '''
    Normalize ``targets`` to a (T, readout_dim) array. A single vector is accepted
    when only the final step carries a loss.
    '''

    graph = spec.as_graph()
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim == 1:
        if graph.loss_timesteps is LossTimesteps.EVERY_STEP:
            raise ShapeError("every_step losses need one target per timestep")
        if targets.shape != (graph.readout_dim,):
            raise ShapeError(f"target has shape {targets.shape}, expected ({graph.readout_dim},)")
        rows = np.zeros((length, graph.readout_dim))
        rows[-1] = targets
        return rows
    if targets.shape != (length, graph.readout_dim):
        raise ShapeError(f"targets have shape {targets.shape}, expected ({length}, {graph.readout_dim})")
    return targets


def input_rows(spec, inputs) -> np.ndarray:
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[0] == 0:
        raise ValueError("inputs must be a nonempty sequence of vectors")
    if inputs.shape[1] != spec.as_graph().input_dim:
        raise ShapeError(f"inputs have width {inputs.shape[1]}, expected {spec.as_graph().input_dim}")
    return inputs


def rollout(spec, params: ParameterSet, inputs, targets, counter: OpCounter = None) -> RolloutRecord:
    '''
    **Purpose:**
    - Run one episode forward and keep every state, pre-activation, output and loss.

    **Args:**
    - ``inputs (array-like)``: T input vectors, T >= 1.
    - ``targets (array-like)``: (T, readout_dim) targets, or one vector for final-only losses.
    - ``counter (OpCounter)``: When given, charged with every stored activation value.

    **Raises:**
    - ``ValueError``: If the input sequence is empty.
    - ``ShapeError``: If inputs or targets have the wrong dimensions.
    '''

    if len(inputs) == 0:
        raise ValueError("inputs must be a nonempty sequence of vectors")
    inputs = input_rows(spec, inputs)
    length = inputs.shape[0]
    targets = target_rows(spec, targets, length)
    mask = loss_steps(spec, length)

    states, preacts = [], []
    outputs = np.zeros_like(targets)
    step_losses = np.zeros(length)
    current = None
    for t in range(length):
        current, pre = forward_step(spec, params, current, inputs[t])
        states.append(current)
        preacts.append(pre)
        outputs[t] = readout(spec, params, current)
        if mask[t]:
            step_losses[t] = step_loss(spec, outputs[t], targets[t])
        if counter is not None:
            counter.record_activations(2 * spec.as_graph().state_size + outputs.shape[1])

    return RolloutRecord(
        inputs=inputs,
        states=states,
        preacts=preacts,
        outputs=outputs,
        targets=targets,
        loss_mask=mask,
        step_losses=step_losses,
        total_loss=float(np.sum(step_losses[mask])),
    )


def unrolled_graph(spec, length: int) -> nx.DiGraph:
    '''
    **Purpose:**
    - Build the unrolled time x depth computation graph of an episode of ``length`` steps.

    Lattice nodes are ``(node_id, t)`` with t starting at 1; readout nodes are
    ``("y", t)`` for each enabled loss step and the loss node is ``"L"``.
    Edges point forward in computation order.
    '''

    graph = spec.as_graph()
    mask = loss_steps(graph, length)
    unrolled = nx.DiGraph()
    for t in range(1, length + 1):
        for node in graph.order:
            unrolled.add_node((node, t))
            if graph.layer(node).has_recurrence and t > 1:
                unrolled.add_edge((node, t - 1), (node, t))
            for pred in graph.preds(node):
                unrolled.add_edge((pred, t), (node, t))
        if mask[t - 1]:
            unrolled.add_edge((graph.output_node, t), (READOUT_NODE, t))
            unrolled.add_edge((READOUT_NODE, t), LOSS_NODE)
    return unrolled


def save_checkpoint(params: ParameterSet, path: str) -> None:
    '''
    **Purpose:**
    - Write every group as a ``# <group_id> <rows> <cols>`` header line followed by
      its rows in decimal text with 17 significant digits.
    '''

    with open(path, "w", encoding="utf-8") as f:
        for group in params:
            rows, cols = group.matrix.shape
            np.savetxt(f, group.matrix, fmt="%.17g", header=f"{group.group_id} {rows} {cols}", comments="# ")


def load_checkpoint(path: str, spec) -> ParameterSet:
    '''
    **Purpose:**
    - Read a checkpoint written by ``save_checkpoint`` and check it against ``spec``.

    **Raises:**
    - ``SpecError``: Malformed file, missing or unknown groups.
    - ``ShapeError``: A group's dims disagree with the spec.
    '''

    graph = spec.as_graph()
    blocks, current = {}, None
    try:
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    parts = line[1:].split()
                    if len(parts) != 3:
                        raise SpecError("header must be '# <group_id> <rows> <cols>'", f"line {lineno}")
                    current = parts[0]
                    blocks[current] = ((int(parts[1]), int(parts[2])), [])
                elif current is None:
                    raise SpecError("values before the first header", f"line {lineno}")
                else:
                    blocks[current][1].append([float(v) for v in line.split()])
    except OSError as e:
        raise SpecError(f"cannot read checkpoint: {e}", str(path))
    except ValueError as e:
        if isinstance(e, SpecError):
            raise
        raise SpecError(f"malformed checkpoint value: {e}", str(path))

    groups = []
    for info in graph.groups:
        if info.group_id not in blocks:
            raise SpecError(f"checkpoint lacks group {info.group_id!r}", str(path))
        dims, rows = blocks.pop(info.group_id)
        matrix = as_matrix(np.array(rows, dtype=np.float64).reshape(len(rows), -1), info.group_id)
        if matrix.shape != dims:
            raise SpecError(f"group {info.group_id}: values do not match header dims {dims}", str(path))
        if dims != info.shape:
            raise ShapeError(f"group {info.group_id}: checkpoint shape {dims} != spec shape {info.shape}")
        groups.append(ParamGroup(info.group_id, info.kind, info.home, matrix))
    if blocks:
        raise SpecError(f"checkpoint has unknown groups {sorted(blocks)}", str(path))
    return ParameterSet(groups)
