'''
@description:
- Plumbing shared by the forward-mode gradient engines (RTRL and E-prop): the
  per-step Jacobians, the instantaneous parameter partials, and the ``OnlineEngine``
  base class that advances the network and its traces one timestep at a time.
'''

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .linalg import OpCounter, activation_eval
from .network import (READOUT_GROUP, GroupKind, ParameterSet, forward_step, input_rows, loss_gradient,
                      loss_steps, readout, step_loss, target_rows, zero_states)


@dataclass(frozen=True)
class StepJacobians:
    '''
    **Purpose:**
    - Local derivatives of one timestep.

    **Attributes:**
    - ``derivatives (dict)``: node -> f'(a^n_t).
    - ``recurrent (dict)``: node -> dh^n_t/dh^n_{t-1}; absent for nodes without recurrence.
    - ``edges (dict)``: (pred, node) -> dh^n_t/dh^pred_t.
    '''

    derivatives: dict
    recurrent: dict
    edges: dict


def local_jacobian(derivative: np.ndarray, weight: np.ndarray) -> np.ndarray:
    '''diag(f'(a)) @ weight, the step Jacobian through a recurrent or layer-to-layer matrix.'''
    return derivative[:, None] * weight


def step_jacobians(graph, params: ParameterSet, preacts: dict) -> StepJacobians:
    derivatives, recurrent, edges = {}, {}, {}
    for node in graph.order:
        layer = graph.layer(node)
        _, derivatives[node] = activation_eval(layer.activation, preacts[node])
        if layer.has_recurrence:
            recurrent[node] = local_jacobian(derivatives[node], params[f"{node}.W_rec"])
        for pred in graph.preds(node):
            edges[(pred, node)] = local_jacobian(derivatives[node], params[graph.edge_group(pred, node)])
    return StepJacobians(derivatives, recurrent, edges)


def group_input(info, x_t: np.ndarray, prev_states: dict, states: dict) -> np.ndarray:
    '''The vector a group's matrix multiplies at this step (x_t, h^p_t, h^n_{t-1} or 1).'''

    if info.kind is GroupKind.INPUT_WEIGHTS:
        return x_t
    if info.kind is GroupKind.RECURRENT_WEIGHTS:
        return prev_states[info.home]
    if info.kind is GroupKind.CROSS_LAYER_WEIGHTS:
        return states[info.source]
    if info.kind is GroupKind.BIAS:
        return np.ones(1)
    return states[info.home]


def diag_partial(derivative: np.ndarray, u: np.ndarray) -> np.ndarray:
    '''Per-synapse partial dh_i/dtheta_ij = f'(a_i) u_j, shaped like the parameter matrix.'''
    return derivative[:, None] * u[None, :]


def dense_partial(derivative: np.ndarray, u: np.ndarray) -> np.ndarray:
    '''
    Full partial dh/dtheta as an (H, H*C) matrix, columns in row-major order of theta:
    column i*C + j holds dh/dtheta_ij, which is nonzero only in row i.
    '''

    width, cols = derivative.shape[0], u.shape[0]
    block = np.zeros((width, width, cols))
    index = np.arange(width)
    block[index, index, :] = derivative[:, None] * u[None, :]
    return block.reshape(width, width * cols)


class OnlineEngine:
    '''
    **Purpose:**
    - Base class for learners that accumulate gradients forward in time.
      Subclasses own the trace pipelines; this class runs the network, feeds each
      pipeline its Jacobians and contracts the loss gradient online.

    **Attributes:**
    - ``spec``: ``NetworkSpec`` or ``GraphSpec``.
    - ``graph (GraphSpec)``: The spec as a graph.
    - ``params (ParameterSet)``: Current parameters; constant within an episode unless ``set_params`` is called.
    - ``counter (OpCounter)``: Work and storage counter for this run.
    - ``t (int)``: Number of steps taken since ``reset``.
    - ``loss (float)``: Sum of the losses seen so far.

    Subclasses implement ``_init_pipeline``, ``_advance``, ``_contract``,
    ``traces`` and ``_trace_size``.
    '''

    name = "online"

    def __init__(self, spec, params: ParameterSet, counter: OpCounter = None):
        self.spec = spec
        self.graph = spec.as_graph()
        self.params = params
        self.counter = counter if counter is not None else OpCounter()
        self.logger = logging.getLogger(__name__)
        self.reset()

    def reset(self) -> None:
        self.t = 0
        self.loss = 0.0
        self.states = zero_states(self.graph)
        self._grads = {}
        self._pipelines = {}
        for gid in self.graph.tracked_groups:
            info = self.graph.group(gid)
            self._grads[gid] = np.zeros(info.shape)
            if info.kind is not GroupKind.READOUT_WEIGHTS:
                self._pipelines[gid] = self._init_pipeline(info)
        self.counter.record_activations(self.graph.state_size)
        self.counter.record_trace_values(self._total_trace_size())

    def set_params(self, params: ParameterSet) -> None:
        '''Swap parameters mid-episode; traces keep the history computed under the old ones.'''
        self.params = params

    def step(self, x_t, target_t=None) -> np.ndarray:
        '''
        **Purpose:**
        - Advance the network and every trace pipeline by one timestep.

        **Args:**
        - ``x_t (array-like)``: Input vector.
        - ``target_t (array-like | None)``: Target for this step, or ``None`` when the
          step carries no loss.

        **Returns:**
        - ``np.ndarray``: Readout y_t.
        '''

        x_t = np.asarray(x_t, dtype=np.float64)
        prev_states = self.states
        states, preacts = forward_step(self.graph, self.params, prev_states, x_t)
        jac = step_jacobians(self.graph, self.params, preacts)

        for gid, pipeline in self._pipelines.items():
            info = self.graph.group(gid)
            u = group_input(info, x_t, prev_states, states)
            self._advance(gid, info, pipeline, jac, u)
        self.counter.record_trace_values(self._total_trace_size())

        y = readout(self.graph, self.params, states)
        if target_t is not None:
            target_t = np.asarray(target_t, dtype=np.float64)
            if target_t.shape != y.shape:
                raise ShapeError(f"target has shape {target_t.shape}, expected {y.shape}")
            dL_dy = loss_gradient(self.graph, y, target_t)
            self.loss += step_loss(self.graph, y, target_t)
            for gid in self._grads:
                info = self.graph.group(gid)
                if info.kind is GroupKind.READOUT_WEIGHTS:
                    self._grads[gid] += np.outer(dL_dy, states[self.graph.output_node])
                    self.counter.add_flops(2 * info.size)
                else:
                    self._grads[gid] += self._contract(gid, info, self._pipelines[gid], dL_dy)

        self.states = states
        self.t += 1
        return y

    def run(self, inputs, targets) -> dict:
        '''
        **Purpose:**
        - Reset, feed a whole episode step by step and return the accumulated gradient.
          Targets are handed to ``step`` only on the steps whose loss is enabled.
        '''

        inputs = input_rows(self.graph, inputs)
        targets = target_rows(self.graph, targets, inputs.shape[0])
        mask = loss_steps(self.graph, inputs.shape[0])
        self.reset()
        for t in range(inputs.shape[0]):
            self.step(inputs[t], targets[t] if mask[t] else None)
        self.logger.debug(f"{self.name}: episode of {inputs.shape[0]} steps, loss {self.loss:.6g}")
        return self.gradient()

    def gradient(self) -> dict:
        '''Copy of the gradient accumulated since the last ``reset``, keyed by group id.'''
        return {gid: grad.copy() for gid, grad in self._grads.items()}

    @property
    def traced_groups(self) -> tuple:
        '''Tracked groups that carry traces (all but the readout weights).'''
        return tuple(self._pipelines)

    def _total_trace_size(self) -> int:
        return sum(self._trace_size(pipeline) for pipeline in self._pipelines.values())

    def readout_weight(self) -> np.ndarray:
        return self.params[READOUT_GROUP]

    def _init_pipeline(self, info):
        raise NotImplementedError

    def _advance(self, gid, info, pipeline, jac: StepJacobians, u: np.ndarray) -> None:
        raise NotImplementedError

    def _contract(self, gid, info, pipeline, dL_dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _trace_size(self, pipeline) -> int:
        raise NotImplementedError

    def traces(self, group_id: str) -> dict:
        raise NotImplementedError
