'''
@description:
- Exact forward-mode gradients. Single-layer RTRL keeps the sensitivity dh_t/dtheta
  and updates it with ``S_t = partial_t + J_rec S_{t-1}``; the deep/DAG engine keeps one
  dense sensitivity per node between the group's home node and the output node and
  adds the cross-node terms in topological order. The result equals BPTT.
'''

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .linalg import OpCounter, contract, matrix_to_tensor3
from .network import ParameterSet
from .online import OnlineEngine, StepJacobians, dense_partial


@dataclass
class SensitivityDense:
    '''
    **Purpose:**
    - Dense sensitivity of one node's state w.r.t. one parameter group.

    **Attributes:**
    - ``owner (tuple)``: ``(node_id, group_id)``.
    - ``matrix (np.ndarray)``: (state_dim, n_params), parameter columns in row-major order.
    - ``shape (tuple)``: Shape of the owning parameter matrix.
    '''

    owner: tuple
    matrix: np.ndarray
    shape: tuple

    def as_tensor3(self) -> np.ndarray:
        '''(state_dim, rows, cols) view, the H x H x H tensor when theta is H x H.'''
        return matrix_to_tensor3(self.matrix, *self.shape)

    @property
    def size(self) -> int:
        return self.matrix.size


def rtrl_init(spec, group_id: str) -> SensitivityDense:
    '''
    **Purpose:**
    - Zero sensitivity for a tracked group at its home node. With zero initial states
      this is the base case; the recursion starts at the first step.

    **Raises:**
    - ``ValueError``: If ``group_id`` is not tracked by ``spec``.
    '''

    graph = spec.as_graph()
    if group_id not in graph.tracked_groups:
        raise ValueError(f"group {group_id!r} is not tracked")
    info = graph.group(group_id)
    width = graph.layer(info.home).hidden_dim
    return SensitivityDense((info.home, group_id), np.zeros((width, info.size)), info.shape)


def rtrl_step(S_prev: SensitivityDense, J_rec: np.ndarray, partial: SensitivityDense,
              counter: OpCounter = None) -> SensitivityDense:
    '''
    **Purpose:**
    - One RTRL update ``S_t = partial + J_rec @ S_prev``.

    **Args:**
    - ``S_prev (SensitivityDense)``: Previous sensitivity.
    - ``J_rec (np.ndarray | None)``: dh_t/dh_{t-1}; ``None`` for a node without recurrence.
    - ``partial (SensitivityDense)``: Instantaneous partial dh_t/dtheta.
    - ``counter (OpCounter)``: Optional flop counter.

    **Raises:**
    - ``ShapeError``: If the operands do not line up.
    '''

    if S_prev.matrix.shape != partial.matrix.shape:
        raise ShapeError(f"previous sensitivity {S_prev.matrix.shape} != partial {partial.matrix.shape}")
    if J_rec is None:
        return SensitivityDense(partial.owner, partial.matrix.copy(), partial.shape)
    return SensitivityDense(partial.owner, partial.matrix + contract(J_rec, S_prev.matrix, counter), partial.shape)


def rtrl_gradient(S_T: SensitivityDense, dL_dy: np.ndarray, J_out: np.ndarray,
                  counter: OpCounter = None) -> np.ndarray:
    '''
    **Purpose:**
    - Contract a sensitivity with the loss gradient: ``(dL_dy @ J_out) @ S``, reshaped
      to the parameter matrix. With losses at every step the engine sums these
      contributions as they arrive.

    **Raises:**
    - ``ShapeError``: If ``dL_dy``, ``J_out`` and ``S_T`` are inconsistent.
    '''

    dL_dy = np.asarray(dL_dy, dtype=np.float64)
    if J_out.shape != (dL_dy.shape[0], S_T.matrix.shape[0]):
        raise ShapeError(f"J_out {J_out.shape} does not map state {S_T.matrix.shape[0]} to loss {dL_dy.shape}")
    q = dL_dy @ J_out
    return contract(q[None, :], S_T.matrix, counter).reshape(S_T.shape)


class DeepRTRL(OnlineEngine):
    '''
    **Purpose:**
    - Exact RTRL across time and depth. For each tracked group it keeps one
      ``SensitivityDense`` per node on a path from the group's home to the output:

        S^n_t = J_rec^n S^n_{t-1} + sum_p J^{n<-p} S^p_t  (+ partial at the home node)

    Only the previous step's states are held; memory does not grow with T.

    **Example:**
    ```python
    >>> engine = DeepRTRL(spec, params)
    >>> grads = engine.run(inputs, targets)
    ```
    '''

    name = "deep_rtrl"

    def _init_pipeline(self, info) -> dict:
        return {
            node: SensitivityDense((node, info.group_id),
                                   np.zeros((self.graph.layer(node).hidden_dim, info.size)), info.shape)
            for node in self.graph.relevant_nodes(info.home)
        }

    def _advance(self, gid, info, pipeline: dict, jac: StepJacobians, u: np.ndarray) -> None:
        updated = {}
        for node, S_prev in pipeline.items():
            if node == info.home:
                partial = SensitivityDense((node, gid), dense_partial(jac.derivatives[node], u), info.shape)
                updated[node] = rtrl_step(S_prev, jac.recurrent.get(node), partial, self.counter)
                continue

            if node in jac.recurrent:
                total = contract(jac.recurrent[node], S_prev.matrix, self.counter)
            else:
                total = np.zeros_like(S_prev.matrix)
            for pred in self.graph.preds(node):
                if pred in updated:
                    total = total + contract(jac.edges[(pred, node)], updated[pred].matrix, self.counter)
            updated[node] = SensitivityDense((node, gid), total, info.shape)
        pipeline.clear()
        pipeline.update(updated)

    def _contract(self, gid, info, pipeline: dict, dL_dy: np.ndarray) -> np.ndarray:
        top = pipeline.get(self.graph.output_node)
        if top is None:
            return np.zeros(info.shape)
        return rtrl_gradient(top, dL_dy, self.readout_weight(), self.counter)

    def _trace_size(self, pipeline: dict) -> int:
        return sum(S.size for S in pipeline.values())

    def traces(self, group_id: str) -> dict:
        '''Copies of the current sensitivities of ``group_id``, keyed by node.'''
        return {node: S.matrix.copy() for node, S in self._pipelines[group_id].items()}


def _single_layer(spec) -> None:
    if len(spec.as_graph().nodes) != 1:
        raise ValueError("single-layer RTRL/E-prop needs a spec with exactly one layer; use the deep variant")


def rtrl_episode(spec, params: ParameterSet, inputs, targets, counter: OpCounter = None) -> dict:
    '''Single-layer RTRL over one episode; returns the gradient of every tracked group.'''
    _single_layer(spec)
    return DeepRTRL(spec, params, counter).run(inputs, targets)


def deep_rtrl_episode(spec, params: ParameterSet, inputs, targets, counter: OpCounter = None) -> dict:
    '''
    **Purpose:**
    - Exact gradient of the episode loss for every tracked group, computed forward in
      time over a chain or DAG.

    **Returns:**
    - ``dict[str, np.ndarray]``: group id -> gradient, same shape as the group.
    '''

    return DeepRTRL(spec, params, counter).run(inputs, targets)
