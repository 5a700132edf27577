'''
@description:
- Dense float64 kernels used by every gradient engine: activation functions with
  their exact derivatives, the single contraction kernel, and the operation counter
  read by the benchmark.
'''

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ShapeError


class ActivationKind(str, Enum):
    '''Nonlinearity applied to a layer's pre-activation.'''

    TANH = "tanh"
    RELU = "relu"
    LINEAR = "linear"
    SIGMOID = "sigmoid"


@dataclass
class OpCounter:
    '''
    **Purpose:**
    - Counts floating point work and storage for one run context.

    **Attributes:**
    - ``flops (int)``: Multiply and add operations performed by the gradient kernels.
    - ``peak_trace_values (int)``: Largest number of trace (or adjoint) values held at once.
    - ``stored_activation_values (int)``: Activation values kept in memory for later use.

    A counter belongs to a single run and must never be shared between runs
    executing concurrently.
    '''

    flops: int = 0
    peak_trace_values: int = 0
    stored_activation_values: int = 0

    def reset(self) -> None:
        self.flops = 0
        self.peak_trace_values = 0
        self.stored_activation_values = 0

    def add_flops(self, count: int) -> None:
        self.flops += int(count)

    def record_trace_values(self, count: int) -> None:
        self.peak_trace_values = max(self.peak_trace_values, int(count))

    def record_activations(self, count: int) -> None:
        self.stored_activation_values += int(count)


def as_matrix(data, name: str = "matrix") -> np.ndarray:
    '''
    **Purpose:**
    - Convert ``data`` into a finite, two-dimensional float64 array.

    **Raises:**
    - ``ShapeError``: If the data is not two-dimensional.
    - ``ValueError``: If any entry is NaN or infinite.
    '''

    matrix = np.asarray(data, dtype=np.float64)
    if matrix.ndim != 2:
        raise ShapeError(f"{name} must be two-dimensional, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise ValueError(f"{name} contains non-finite entries")
    return matrix


def tensor3_to_matrix(tensor: np.ndarray) -> np.ndarray:
    '''Flatten a (d0, d1, d2) tensor into the (d0, d1 * d2) matrix the kernels operate on.'''

    tensor = np.asarray(tensor, dtype=np.float64)
    if tensor.ndim != 3:
        raise ShapeError(f"expected a three-dimensional tensor, got shape {tensor.shape}")
    return tensor.reshape(tensor.shape[0], tensor.shape[1] * tensor.shape[2])


def matrix_to_tensor3(matrix: np.ndarray, d1: int, d2: int) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != d1 * d2:
        raise ShapeError(f"cannot view matrix of shape {matrix.shape} as (*, {d1}, {d2})")
    return matrix.reshape(matrix.shape[0], d1, d2)


def activation_eval(kind: ActivationKind, preact) -> tuple:
    '''
    **Purpose:**
    - Evaluate an activation function and its exact derivative elementwise.

    **Args:**
    - ``kind (ActivationKind)``: Which nonlinearity to apply.
    - ``preact (array-like)``: Finite pre-activation vector.

    **Returns:**
    - ``tuple[np.ndarray, np.ndarray]``: ``(value, derivative)``, both the shape of ``preact``.

    **Example:**
    ```python
    >>> activation_eval(ActivationKind.TANH, [0.0, 0.0])
    ```
    Example Output:
    - (array([0., 0.]), array([1., 1.]))
    '''

    z = np.asarray(preact, dtype=np.float64)
    kind = ActivationKind(kind)

    if kind is ActivationKind.TANH:
        value = np.tanh(z)
        derivative = 1.0 - value * value
    elif kind is ActivationKind.RELU:
        value = np.maximum(z, 0.0)
        derivative = (z > 0.0).astype(np.float64) # subgradient 0 at the kink
    elif kind is ActivationKind.LINEAR:
        value = z.copy()
        derivative = np.ones_like(z)
    else:
        value = 0.5 * (1.0 + np.tanh(0.5 * z)) # overflow-free logistic
        derivative = value * (1.0 - value)

    return value, derivative


def contract(J: np.ndarray, S: np.ndarray, counter: OpCounter = None) -> np.ndarray:
    '''
    **Purpose:**
    - Matrix product ``J @ S``, the one kernel every sensitivity recursion goes through.

    **Args:**
    - ``J (np.ndarray)``: Jacobian of shape (A, B).
    - ``S (np.ndarray)``: Sensitivity of shape (B, P).
    - ``counter (OpCounter)``: Optional counter, incremented by ``2*A*B*P`` flops.

    **Returns:**
    - ``np.ndarray``: Matrix of shape (A, P).

    **Raises:**
    - ``ShapeError``: If either operand is not a matrix or the inner dimensions differ.
    '''

    if J.ndim != 2 or S.ndim != 2:
        raise ShapeError(f"contract expects matrices, got J{J.shape} and S{S.shape}")
    if J.shape[1] != S.shape[0]:
        raise ShapeError(
            f"cannot contract J{J.shape} with S{S.shape}: inner dimensions {J.shape[1]} != {S.shape[0]}"
        )

    if counter is not None:
        counter.add_flops(2 * J.shape[0] * J.shape[1] * S.shape[1])
    return J @ S
