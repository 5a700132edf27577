'''
@description:
- Ground-truth gradients the forward-mode engines are checked against:
  reverse-mode BPTT, central finite differences, and brute-force summation over
  every gradient path in the unrolled time x depth lattice.
'''

import logging
from dataclasses import dataclass

import networkx as nx
import numpy as np

from .errors import ResourceLimitError
from .linalg import OpCounter, activation_eval
from .network import (LOSS_NODE, READOUT_GROUP, READOUT_NODE, GroupKind, ParameterSet, RolloutRecord,
                      loss_gradient, rollout, unrolled_graph)

logger = logging.getLogger(__name__)

DEFAULT_FD_STEP = 1e-5
DEFAULT_PATH_CAP = 1_000_000


@dataclass(frozen=True)
class GradientPath:
    '''
    **Purpose:**
    - One walk from a readout node down to the step where the parameter group enters.

    **Attributes:**
    - ``group_id (str)``: Parameter group the path ends in.
    - ``nodes (tuple)``: Lattice nodes ``(node_id, t)``, readout ``("y", t)`` first, terminal last.
    - ``value (np.ndarray)``: This path's contribution to dL/dtheta, shaped like the group.
    '''

    group_id: str
    nodes: tuple
    value: np.ndarray

    def is_monotone(self) -> bool:
        '''Every hop goes one step back in time within a node, or down one edge at the same time.'''
        for (node_a, t_a), (node_b, t_b) in zip(self.nodes, self.nodes[1:]):
            if node_a == node_b:
                if t_b != t_a - 1:
                    return False
            elif t_a != t_b:
                return False
        return True

    def describe(self) -> str:
        hops = " -> ".join(f"{node}@{t}" for node, t in self.nodes)
        return f"{self.group_id}: {hops}"


def _wanted(graph, groups) -> tuple:
    return tuple(groups) if groups is not None else graph.tracked_groups


def bptt_from_record(spec, params: ParameterSet, record: RolloutRecord, groups=None,
                     counter: OpCounter = None) -> dict:
    '''
    **Purpose:**
    - Reverse-mode gradient of ``record.total_loss``, stepping backward through the
      stored states from t = T to t = 1 and through the nodes in reverse topological order.

    **Args:**
    - ``record (RolloutRecord)``: Output of ``rollout`` for the same spec and params.
    - ``groups (iterable | None)``: Groups to return; defaults to the tracked groups.
    - ``counter (OpCounter)``: Optional; charged with backward flops and adjoint storage.

    **Returns:**
    - ``dict[str, np.ndarray]``: group id -> gradient.
    '''

    graph = spec.as_graph()
    grads = {info.group_id: np.zeros(info.shape) for info in graph.groups}
    carry = {node: np.zeros(graph.layer(node).hidden_dim) for node in graph.order}
    W_out = params[READOUT_GROUP]
    out = graph.output_node
    flops = 0

    for t in reversed(range(record.length)):
        states = record.states[t]
        prev = record.states[t - 1] if t > 0 else {n: np.zeros_like(v) for n, v in states.items()}

        delta_h = {node: carry[node].copy() for node in graph.order}
        if record.loss_mask[t]:
            dL_dy = loss_gradient(graph, record.outputs[t], record.targets[t])
            delta_h[out] = delta_h[out] + W_out.T @ dL_dy
            grads[READOUT_GROUP] += np.outer(dL_dy, states[out])
            flops += 4 * W_out.size

        delta_a = {}
        for node in reversed(graph.order):
            for succ in graph.succs(node):
                weight = params[graph.edge_group(node, succ)]
                delta_h[node] = delta_h[node] + weight.T @ delta_a[succ]
                flops += 2 * weight.size
            _, derivative = activation_eval(graph.layer(node).activation, record.preacts[t][node])
            delta_a[node] = delta_h[node] * derivative

        for node in graph.order:
            delta = delta_a[node]
            layer = graph.layer(node)
            if node in graph.input_nodes:
                grads[f"{node}.W_in"] += np.outer(delta, record.inputs[t])
            if layer.has_recurrence:
                grads[f"{node}.W_rec"] += np.outer(delta, prev[node])
                carry[node] = params[f"{node}.W_rec"].T @ delta
                flops += 4 * layer.hidden_dim * layer.hidden_dim
            else:
                carry[node] = np.zeros_like(delta)
            for pred in graph.preds(node):
                grads[graph.edge_group(pred, node)] += np.outer(delta, states[pred])
            grads[f"{node}.b"] += delta[:, None]

    if counter is not None:
        counter.add_flops(flops)
        counter.record_trace_values(graph.state_size)
    return {gid: grads[gid] for gid in _wanted(graph, groups)}


def bptt_gradient(spec, params: ParameterSet, inputs, targets, groups=None, counter: OpCounter = None) -> dict:
    '''
    **Purpose:**
    - Exact gradient of the episode loss by backpropagation through time. Every
      activation of the episode is stored first (and charged to ``counter``).

    **Example:**
    ```python
    >>> grads = bptt_gradient(spec, params, inputs, targets)
    >>> grads["l1.W_in"].shape
    ```
    Example Output:
    - (4, 3)
    '''

    record = rollout(spec, params, inputs, targets, counter=counter)
    return bptt_from_record(spec, params, record, groups, counter)


def finite_diff_gradient(spec, params: ParameterSet, inputs, targets, step: float = DEFAULT_FD_STEP,
                         groups=None) -> dict:
    '''
    **Purpose:**
    - Central differences ``(L(theta + step) - L(theta - step)) / (2 * step)`` for every
      scalar of every requested group.

    **Raises:**
    - ``ValueError``: If ``step`` is not positive.
    '''

    if not step > 0:
        raise ValueError(f"finite-difference step must be positive, got {step}")

    graph = spec.as_graph()
    grads = {}
    for gid in _wanted(graph, groups):
        base = params[gid]
        logger.debug(f"Finite differences over {gid} ({base.size} entries, step {step})")
        grad = np.zeros(base.shape)
        for index in np.ndindex(base.shape):
            plus = base.copy()
            plus[index] += step
            minus = base.copy()
            minus[index] -= step
            loss_plus = rollout(spec, params.replace({gid: plus}), inputs, targets).total_loss
            loss_minus = rollout(spec, params.replace({gid: minus}), inputs, targets).total_loss
            grad[index] = (loss_plus - loss_minus) / (2 * step)
        grads[gid] = grad
    return grads


def _group_sources(graph, info, length: int) -> list:
    if info.kind is GroupKind.READOUT_WEIGHTS:
        return [(READOUT_NODE, t) for t in range(1, length + 1)]
    return [(info.home, t) for t in range(1, length + 1)]


def count_gradient_paths(spec, length: int, groups=None) -> int:
    '''
    **Purpose:**
    - Number of gradient paths ``enumerate_gradient_paths`` would produce, by dynamic
      programming over the unrolled graph (no enumeration).
    '''

    graph = spec.as_graph()
    unrolled = unrolled_graph(graph, length)
    ways = {}
    for node in reversed(list(nx.topological_sort(unrolled))):
        if node == LOSS_NODE:
            ways[node] = 0
        elif node[0] == READOUT_NODE:
            ways[node] = 1
        else:
            ways[node] = sum(ways[succ] for succ in unrolled.successors(node))

    total = 0
    for gid in _wanted(graph, groups):
        info = graph.group(gid)
        total += sum(ways.get(source, 0) for source in _group_sources(graph, info, length))
    return total


def enumerate_gradient_paths(spec, params: ParameterSet, inputs, targets, cap: int = DEFAULT_PATH_CAP,
                             groups=None) -> tuple:
    '''
    **Purpose:**
    - List every gradient path of the unrolled network and sum their products.
      A path starts at a readout node y_t, optionally hops back in time within a
      node (through dh^n_s/dh^n_{s-1}) or down an edge (through dh^n_s/dh^p_s), and ends
      at a lattice node of the group's home node where dh/dtheta enters. For a chain
      of depth L, loss at T only and the bottom layer's input weights there are
      C(T+L-1, L) paths.

    **Returns:**
    - ``tuple[list[GradientPath], dict]``: The paths in deterministic order and the
      gradient they sum to.

    **Raises:**
    - ``ResourceLimitError``: If the path count exceeds ``cap``.
    '''

    graph = spec.as_graph()
    record = rollout(spec, params, inputs, targets)
    length = record.length
    count = count_gradient_paths(graph, length, groups)
    if count > cap:
        raise ResourceLimitError("gradient path count", count, cap)

    unrolled = unrolled_graph(graph, length)
    derivatives = [
        {node: activation_eval(graph.layer(node).activation, record.preacts[t][node])[1] for node in graph.order}
        for t in range(length)
    ]
    W_out = params[READOUT_GROUP]

    def group_input(info, t: int) -> np.ndarray:
        if info.kind is GroupKind.INPUT_WEIGHTS:
            return record.inputs[t - 1]
        if info.kind is GroupKind.RECURRENT_WEIGHTS:
            return record.states[t - 2][info.home] if t > 1 else np.zeros(graph.layer(info.home).hidden_dim)
        if info.kind is GroupKind.CROSS_LAYER_WEIGHTS:
            return record.states[t - 1][info.source]
        if info.kind is GroupKind.BIAS:
            return np.ones(1)
        return record.states[t - 1][graph.output_node]

    paths = []
    gradient = {}
    for gid in _wanted(graph, groups):
        info = graph.group(gid)
        gradient[gid] = np.zeros(info.shape)
        sources = set(_group_sources(graph, info, length))
        useful = set(sources)
        for source in sources:
            if source in unrolled:
                useful |= nx.descendants(unrolled, source)

        for t in range(1, length + 1):
            if not record.loss_mask[t - 1]:
                continue
            dL_dy = loss_gradient(graph, record.outputs[t - 1], record.targets[t - 1])
            # depth-first with an explicit stack; children are pushed reversed to keep the visiting order
            stack = [((READOUT_NODE, t), dL_dy, ())]
            while stack:
                node, v, trail = stack.pop()
                trail = trail + (node,)
                if node in sources:
                    if info.kind is GroupKind.READOUT_WEIGHTS:
                        value = np.outer(v, group_input(info, node[1]))
                    else:
                        value = np.outer(v * derivatives[node[1] - 1][node[0]], group_input(info, node[1]))
                    paths.append(GradientPath(gid, trail, value))
                    gradient[gid] += value
                if node[0] == READOUT_NODE:
                    below = (graph.output_node, node[1])
                    if below in useful:
                        stack.append((below, v @ W_out, trail))
                    continue
                name, step = node
                delta = v * derivatives[step - 1][name]
                children = []
                for pred in sorted(unrolled.predecessors(node), key=lambda n: (-n[1], n[0])):
                    if pred not in useful:
                        continue
                    if pred[0] == name:
                        children.append((pred, delta @ params[f"{name}.W_rec"], trail))
                    else:
                        children.append((pred, delta @ params[graph.edge_group(pred[0], name)], trail))
                stack.extend(reversed(children))

    logger.info(f"Enumerated {len(paths)} gradient paths over {length} steps")
    return paths, gradient
