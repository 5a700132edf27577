'''
@description:
- E-prop: eligibility traces that keep only the direct influence of each synapse on
  its own unit. The home layer holds one scalar trace per synapse; layers above
  it carry the trace toward the output either densely (``diag_home_dense_above``)
  or as per-synapse traces again (``diag_everywhere``).
'''

from dataclasses import dataclass

import numpy as np

from .errors import InvariantError, ShapeError, SpecError
from .linalg import OpCounter, contract
from .network import NetworkSpec, ParameterSet, TraceMode
from .online import OnlineEngine, StepJacobians, diag_partial
from .rtrl import SensitivityDense


@dataclass
class SensitivityDiag:
    '''
    **Purpose:**
    - Per-synapse eligibility trace: entry (i, j) approximates dh_i/dtheta_ij.

    **Attributes:**
    - ``owner (tuple)``: ``(node_id, group_id)``.
    - ``matrix (np.ndarray)``: Same shape as the owning parameter matrix.
    '''

    owner: tuple
    matrix: np.ndarray

    @property
    def shape(self) -> tuple:
        return self.matrix.shape

    @property
    def size(self) -> int:
        return self.matrix.size


def eprop_step(e_prev: SensitivityDiag, J_rec_diag: np.ndarray, partial: SensitivityDiag,
               counter: OpCounter = None) -> SensitivityDiag:
    '''
    **Purpose:**
    - ``e_t[i, :] = partial[i, :] + J_rec_diag[i] * e_prev[i, :]``. Only the diagonal of
      dh_t/dh_{t-1} is used, so dh_i/dtheta_jk stays zero for j != i.

    **Args:**
    - ``e_prev (SensitivityDiag)``: Previous trace.
    - ``J_rec_diag (np.ndarray | None)``: Diagonal of the recurrent Jacobian; ``None`` means no recurrence.
    - ``partial (SensitivityDiag)``: Instantaneous per-synapse partial.

    **Raises:**
    - ``ShapeError``: If shapes disagree.
    '''

    if e_prev.shape != partial.shape:
        raise ShapeError(f"previous trace {e_prev.shape} != partial {partial.shape}")
    if J_rec_diag is None:
        return SensitivityDiag(partial.owner, partial.matrix.copy())
    J_rec_diag = np.asarray(J_rec_diag, dtype=np.float64)
    if J_rec_diag.shape != (e_prev.shape[0],):
        raise ShapeError(f"Jacobian diagonal of length {J_rec_diag.shape} does not match trace rows {e_prev.shape[0]}")
    if counter is not None:
        counter.add_flops(2 * e_prev.size)
    return SensitivityDiag(partial.owner, partial.matrix + J_rec_diag[:, None] * e_prev.matrix)


def _expand_contract(J: np.ndarray, e: SensitivityDiag, counter: OpCounter = None) -> np.ndarray:
    '''``J @ dense(e)`` without building the dense form: column (i, j) is J[:, i] * e[i, j].'''

    if J.shape[1] != e.shape[0]:
        raise ShapeError(f"cannot contract J{J.shape} with trace of shape {e.shape}")
    if counter is not None:
        counter.add_flops(J.shape[0] * e.size)
    return (J[:, :, None] * e.matrix[None, :, :]).reshape(J.shape[0], e.size)


def _diag_term(J: np.ndarray, trace: SensitivityDiag, counter: OpCounter = None) -> np.ndarray:
    if J.shape[0] != J.shape[1] or J.shape[0] != trace.shape[0]:
        raise ShapeError(f"diagonal restriction needs a square Jacobian matching trace rows, got J{J.shape}")
    if counter is not None:
        counter.add_flops(trace.size)
    return np.diagonal(J)[:, None] * trace.matrix


def dag_eprop_step(traces: dict, jacobians: StepJacobians, partial: SensitivityDiag, mode: TraceMode,
                   order, preds: dict, counter: OpCounter = None) -> dict:
    '''
    **Purpose:**
    - Advance every trace of one parameter group by one timestep over a DAG:

        e^n_t = D(J_rec^n) e^n_{t-1} + sum_{p in preds(n)} C(J^{n<-p}) e^p_t

      with the per-synapse partial added at the home node. ``D`` and ``C`` are the
      full matrices in ``diag_home_dense_above`` mode and their diagonals in
      ``diag_everywhere`` mode; the home node always uses ``eprop_step``.

    **Args:**
    - ``traces (dict)``: node -> trace at t-1 (``SensitivityDiag`` at the home node,
      ``SensitivityDense`` or ``SensitivityDiag`` above, depending on ``mode``).
    - ``jacobians (StepJacobians)``: Local derivatives at t.
    - ``partial (SensitivityDiag)``: Per-synapse partial of the home node; its owner names the home.
    - ``mode (TraceMode)``: Propagation mode above the home node.
    - ``order (sequence)``: Processing order of the nodes in ``traces``.
    - ``preds (dict)``: node -> predecessor nodes.

    **Returns:**
    - ``dict``: node -> trace at t.

    **Raises:**
    - ``InvariantError``: A node is processed before one of its traced predecessors,
      or a node in ``order`` has no trace.
    '''

    mode = TraceMode(mode)
    home, gid = partial.owner
    updated = {}
    for node in order:
        if node not in traces:
            raise InvariantError(f"no trace for node {node!r} of group {gid!r}")
        prev = traces[node]
        if node == home:
            rec_diag = np.diagonal(jacobians.recurrent[node]) if node in jacobians.recurrent else None
            updated[node] = eprop_step(prev, rec_diag, partial, counter)
            continue

        J_rec = jacobians.recurrent.get(node)
        if mode is TraceMode.DIAG_EVERYWHERE:
            total = _diag_term(J_rec, prev, counter) if J_rec is not None else np.zeros_like(prev.matrix)
        else:
            total = contract(J_rec, prev.matrix, counter) if J_rec is not None else np.zeros_like(prev.matrix)

        for pred in preds.get(node, ()):
            if pred not in traces:
                continue
            if pred not in updated:
                raise InvariantError(f"node {node!r} processed before its predecessor {pred!r}")
            J = jacobians.edges[(pred, node)]
            source = updated[pred]
            if mode is TraceMode.DIAG_EVERYWHERE:
                total = total + _diag_term(J, source, counter)
            elif isinstance(source, SensitivityDiag):
                total = total + _expand_contract(J, source, counter)
            else:
                total = total + contract(J, source.matrix, counter)

        if mode is TraceMode.DIAG_EVERYWHERE:
            updated[node] = SensitivityDiag((node, gid), total)
        else:
            updated[node] = SensitivityDense((node, gid), total, partial.shape)
    return updated


def deep_eprop_step(traces: dict, jacobians: StepJacobians, partial: SensitivityDiag, mode: TraceMode,
                    order, counter: OpCounter = None) -> dict:
    '''
    **Purpose:**
    - Chain form of ``dag_eprop_step``: ``order`` lists the home layer and every layer
      above it, each layer fed only by the one below.

        e^l_t = D(dh^l_t/dh^l_{t-1}) e^l_{t-1} + K,
        K = C(dh^l_t/dh^{l-1}_t) e^{l-1}_t above the home layer, the partial at it.
    '''

    order = tuple(order)
    for node in order:
        if node not in traces:
            raise InvariantError(f"no trace for layer {node!r} of group {partial.owner[1]!r}")
    preds = {node: (below,) for below, node in zip(order, order[1:])}
    return dag_eprop_step(traces, jacobians, partial, mode, order, preds, counter)


def eprop_gradient(top_trace, dL_dy: np.ndarray, J_out: np.ndarray, counter: OpCounter = None) -> np.ndarray:
    '''
    **Purpose:**
    - One step's gradient contribution from the trace at the output node:
      ``q = dL_dy @ J_out`` then ``q[:, None] * e`` for a per-synapse trace, or
      ``q @ S`` reshaped for a dense one. The engine sums these over the loss steps.

    **Raises:**
    - ``ShapeError``: If the dimensions are inconsistent.
    '''

    dL_dy = np.asarray(dL_dy, dtype=np.float64)
    rows = top_trace.matrix.shape[0]
    if J_out.shape != (dL_dy.shape[0], rows):
        raise ShapeError(f"J_out {J_out.shape} does not map state {rows} to loss {dL_dy.shape}")
    q = dL_dy @ J_out
    if isinstance(top_trace, SensitivityDiag):
        if counter is not None:
            counter.add_flops(top_trace.size)
        return q[:, None] * top_trace.matrix
    return contract(q[None, :], top_trace.matrix, counter).reshape(top_trace.shape)


class DeepEprop(OnlineEngine):
    '''
    **Purpose:**
    - Deep/DAG E-prop engine. Each tracked group gets its own pipeline of traces
      along the nodes between its home node and the output node; pipelines never
      share state.

    **Attributes:**
    - ``mode (TraceMode)``: Upper-trace propagation mode, fixed for the engine's lifetime.

    **Raises:**
    - ``SpecError``: ``diag_everywhere`` on a spec whose widths differ along a traced path.
    '''

    name = "deep_eprop"

    def __init__(self, spec, params: ParameterSet, mode: TraceMode = None, counter: OpCounter = None):
        self.mode = TraceMode(mode) if mode is not None else spec.as_graph().trace_mode
        self._chain = isinstance(spec, NetworkSpec)
        if self.mode is TraceMode.DIAG_EVERYWHERE:
            graph = spec.as_graph()
            for gid in graph.tracked_groups:
                info = graph.group(gid)
                width = graph.layer(info.home).hidden_dim
                if any(graph.layer(node).hidden_dim != width for node in graph.relevant_nodes(info.home)):
                    raise SpecError(f"diag_everywhere requires equal widths from {info.home!r} to the output",
                                    "trace_mode")
        super().__init__(spec, params, counter)

    def _init_pipeline(self, info) -> dict:
        pipeline = {}
        for node in self.graph.relevant_nodes(info.home):
            if node == info.home or self.mode is TraceMode.DIAG_EVERYWHERE:
                pipeline[node] = SensitivityDiag((node, info.group_id), np.zeros(info.shape))
            else:
                width = self.graph.layer(node).hidden_dim
                pipeline[node] = SensitivityDense((node, info.group_id), np.zeros((width, info.size)), info.shape)
        return pipeline

    def _advance(self, gid, info, pipeline: dict, jac: StepJacobians, u: np.ndarray) -> None:
        if not pipeline:
            return
        partial = SensitivityDiag((info.home, gid), diag_partial(jac.derivatives[info.home], u))
        order = tuple(pipeline)
        if self._chain:
            updated = deep_eprop_step(pipeline, jac, partial, self.mode, order, self.counter)
        else:
            preds = {node: self.graph.preds(node) for node in order}
            updated = dag_eprop_step(pipeline, jac, partial, self.mode, order, preds, self.counter)
        pipeline.clear()
        pipeline.update(updated)

    def _contract(self, gid, info, pipeline: dict, dL_dy: np.ndarray) -> np.ndarray:
        top = pipeline.get(self.graph.output_node)
        if top is None:
            return np.zeros(info.shape)
        return eprop_gradient(top, dL_dy, self.readout_weight(), self.counter)

    def _trace_size(self, pipeline: dict) -> int:
        return sum(trace.size for trace in pipeline.values())

    def traces(self, group_id: str) -> dict:
        return {node: trace.matrix.copy() for node, trace in self._pipelines[group_id].items()}


def eprop_episode(spec, params: ParameterSet, inputs, targets, mode: TraceMode = None,
                  counter: OpCounter = None) -> dict:
    '''Single-layer E-prop over one episode.'''
    if len(spec.as_graph().nodes) != 1:
        raise ValueError("single-layer E-prop needs a spec with exactly one layer; use deep_eprop_episode")
    return DeepEprop(spec, params, mode, counter).run(inputs, targets)


def deep_eprop_episode(spec, params: ParameterSet, inputs, targets, mode: TraceMode = None,
                       counter: OpCounter = None) -> dict:
    '''Deep/DAG E-prop over one episode; ``mode`` defaults to the spec's ``trace_mode``.'''
    return DeepEprop(spec, params, mode, counter).run(inputs, targets)
