'''
@description:
- Unit tests for single-layer and deep RTRL: exactness against BPTT on chains and
  DAGs, the step kernels, stepwise use of the engine and constant memory in T.
'''

import unittest
from unittest import mock

import numpy as np

from deep_eprop.errors import ShapeError
from deep_eprop.linalg import OpCounter
from deep_eprop.network import LayerSpec, LossTimesteps, NetworkSpec, init_params, rollout
from deep_eprop.online import StepJacobians, step_jacobians
from deep_eprop.oracles import bptt_gradient
from deep_eprop.rtrl import DeepRTRL, SensitivityDense, deep_rtrl_episode, rtrl_episode, rtrl_gradient, rtrl_init, rtrl_step
from deep_eprop.verify import random_chain_instance, random_dag_instance, random_diamond_instance, relative_error


def flipped_cross_layer_jacobians(graph, params, preacts) -> StepJacobians:
    '''``step_jacobians`` with every layer-to-layer Jacobian negated.'''
    jac = step_jacobians(graph, params, preacts)
    return StepJacobians(jac.derivatives, jac.recurrent, {edge: -J for edge, J in jac.edges.items()})


class TestRTRLKernels(unittest.TestCase):

    def setUp(self) -> None:
        self.spec = NetworkSpec(input_dim=2, layers=(LayerSpec("l1", 3),), readout_dim=1,
                                tracked_groups=("l1.W_in", "l1.W_rec"))

    def test_init(self) -> None:
        S = rtrl_init(self.spec, "l1.W_rec")
        self.assertEqual(S.matrix.shape, (3, 9))
        self.assertEqual(S.as_tensor3().shape, (3, 3, 3))
        self.assertFalse(np.any(S.matrix))
        with self.assertRaises(ValueError):
            rtrl_init(self.spec, "l1.b")

    def test_step(self) -> None:
        rng = np.random.default_rng(0)
        prev = SensitivityDense(("l1", "g"), rng.standard_normal((3, 6)), (3, 2))
        partial = SensitivityDense(("l1", "g"), rng.standard_normal((3, 6)), (3, 2))
        J = rng.standard_normal((3, 3))
        counter = OpCounter()
        result = rtrl_step(prev, J, partial, counter)
        self.assertTrue(np.allclose(result.matrix, partial.matrix + J @ prev.matrix))
        self.assertEqual(counter.flops, 2 * 3 * 3 * 6)
        self.assertTrue(np.array_equal(rtrl_step(prev, None, partial).matrix, partial.matrix))

    def test_sensitivity_matches_finite_differences_on_states(self) -> None:
        spec = NetworkSpec(input_dim=2, layers=(LayerSpec("l1", 3),), readout_dim=1, tracked_groups=("l1.W_rec",))
        params = init_params(spec, 3)
        inputs = np.random.default_rng(3).standard_normal((4, 2))
        engine = DeepRTRL(spec, params)
        engine.run(inputs, np.zeros(1))
        S_T = engine.traces("l1.W_rec")["l1"]
        step = 1e-5
        for j in range(3):
            for k in range(3):
                plus, minus = params["l1.W_rec"].copy(), params["l1.W_rec"].copy()
                plus[j, k] += step
                minus[j, k] -= step
                h_plus = rollout(spec, params.replace({"l1.W_rec": plus}), inputs, np.zeros(1)).states[-1]["l1"]
                h_minus = rollout(spec, params.replace({"l1.W_rec": minus}), inputs, np.zeros(1)).states[-1]["l1"]
                numeric = (h_plus - h_minus) / (2 * step)
                self.assertLessEqual(np.max(np.abs(S_T[:, j * 3 + k] - numeric)), 1e-6, (j, k))

    def test_step_shape_mismatch(self) -> None:
        prev = SensitivityDense(("l1", "g"), np.zeros((3, 6)), (3, 2))
        partial = SensitivityDense(("l1", "g"), np.zeros((3, 9)), (3, 3))
        with self.assertRaises(ShapeError):
            rtrl_step(prev, np.eye(3), partial)

    def test_gradient_contraction(self) -> None:
        rng = np.random.default_rng(1)
        S = SensitivityDense(("l1", "g"), rng.standard_normal((3, 6)), (3, 2))
        dL_dy = rng.standard_normal(2)
        J_out = rng.standard_normal((2, 3))
        grad = rtrl_gradient(S, dL_dy, J_out)
        self.assertEqual(grad.shape, (3, 2))
        self.assertTrue(np.allclose(grad.ravel(), (dL_dy @ J_out) @ S.matrix))
        with self.assertRaises(ShapeError):
            rtrl_gradient(S, dL_dy, rng.standard_normal((2, 4)))


class TestRTRLExactness(unittest.TestCase):
    '''
    Test suite for the exactness of ``rtrl_episode`` and ``deep_rtrl_episode``.
    '''

    def test_single_layer_matches_bptt(self) -> None:
        for seed in range(5):
            inst = random_chain_instance(seed, 1, 5, 8)
            exact = rtrl_episode(inst.spec, inst.params, inst.inputs, inst.targets)
            reference = bptt_gradient(inst.spec, inst.params, inst.inputs, inst.targets)
            self.assertLess(relative_error(exact, reference), 1e-9, seed)

    def test_single_layer_rejects_deep_spec(self) -> None:
        inst = random_chain_instance(0, 2, 3, 4)
        with self.assertRaises(ValueError):
            rtrl_episode(inst.spec, inst.params, inst.inputs, inst.targets)

    def test_deep_chain_matches_bptt(self) -> None:
        for seed in range(10):
            inst = random_chain_instance(100 + seed, 1 + seed % 4, 6, 3 + seed)
            exact = deep_rtrl_episode(inst.spec, inst.params, inst.inputs, inst.targets)
            reference = bptt_gradient(inst.spec, inst.params, inst.inputs, inst.targets)
            self.assertLess(relative_error(exact, reference), 1e-9, seed)

    def test_dag_matches_bptt(self) -> None:
        instances = [random_dag_instance(200 + seed) for seed in range(8)] + [random_diamond_instance(7, length=6)]
        for inst in instances:
            exact = deep_rtrl_episode(inst.spec, inst.params, inst.inputs, inst.targets)
            reference = bptt_gradient(inst.spec, inst.params, inst.inputs, inst.targets)
            self.assertLess(relative_error(exact, reference), 1e-9, inst.spec.as_graph().edges)

    def test_flipped_cross_layer_term_is_detected(self) -> None:
        '''
        **Purpose:**
        - Negating the layer-to-layer Jacobian breaks exactness visibly, so the
          comparison with BPTT is sensitive to that term.
        '''
        inst = random_chain_instance(3, 2, 4, 5)
        reference = bptt_gradient(inst.spec, inst.params, inst.inputs, inst.targets)
        with mock.patch("deep_eprop.online.step_jacobians", flipped_cross_layer_jacobians):
            broken = deep_rtrl_episode(inst.spec, inst.params, inst.inputs, inst.targets)
        self.assertGreater(relative_error(broken, reference), 1e-3)


class TestDeepRTRLEngine(unittest.TestCase):

    def setUp(self) -> None:
        self.spec = NetworkSpec(input_dim=2, layers=(LayerSpec("l1", 3), LayerSpec("l2", 3)), readout_dim=1,
                                loss_timesteps=LossTimesteps.EVERY_STEP, tracked_groups=("l1.W_rec", "W_out"))
        self.params = init_params(self.spec, 5)
        rng = np.random.default_rng(5)
        self.inputs = rng.standard_normal((6, 2))
        self.targets = rng.standard_normal((6, 1))

    def test_stepwise_equals_run(self) -> None:
        engine = DeepRTRL(self.spec, self.params)
        batched = engine.run(self.inputs, self.targets)
        engine.reset()
        for x_t, target_t in zip(self.inputs, self.targets):
            engine.step(x_t, target_t)
        stepped = engine.gradient()
        for gid in batched:
            self.assertTrue(np.array_equal(batched[gid], stepped[gid]), gid)
        self.assertEqual(engine.t, 6)

    def test_traces_cover_home_to_output(self) -> None:
        engine = DeepRTRL(self.spec, self.params)
        engine.run(self.inputs, self.targets)
        traces = engine.traces("l1.W_rec")
        self.assertEqual(sorted(traces), ["l1", "l2"])
        self.assertEqual(traces["l2"].shape, (3, 9))
        self.assertEqual(engine.traced_groups, ("l1.W_rec",))

    def test_memory_is_constant_in_sequence_length(self) -> None:
        peaks = []
        for length in (4, 32):
            counter = OpCounter()
            inputs = np.ones((length, 2))
            deep_rtrl_episode(self.spec, self.params, inputs, np.zeros((length, 1)), counter=counter)
            peaks.append((counter.peak_trace_values, counter.stored_activation_values))
        self.assertEqual(peaks[0][0], peaks[1][0])
        self.assertEqual(peaks[0][0], 2 * 3 * 9)
        self.assertEqual(peaks[0][1], peaks[1][1])


if __name__ == '__main__':
    unittest.main()
