'''
@description:
- Unit tests for the synthetic tasks, the gradient-alignment metrics and the
  training loop, including agreement between exact gradient methods over many
  episodes.
'''

import csv
import itertools
import os
import shutil
import tempfile
import unittest

import numpy as np

from deep_eprop.errors import DivergenceError, ShapeError
from deep_eprop.linalg import ActivationKind
from deep_eprop.network import LayerSpec, LossTimesteps, NetworkSpec, TraceMode, init_params
from deep_eprop.oracles import bptt_gradient
from deep_eprop.trainer import (Algorithm, MetricsRow, TaskKind, TrainConfig, UpdateTiming, generate_task,
                                gradient_alignment, task_stream, train, write_metrics_csv)
from deep_eprop.verify import track_all


class TestTasks(unittest.TestCase):

    def test_temporal_xor_answer(self) -> None:
        for bits, answer in (((1, 0), 1.0), ((1, 1), 0.0), ((0, 0), 0.0), ((0, 1), 1.0)):
            task = generate_task(TaskKind.TEMPORAL_XOR, {"length": 10, "flagged_bits": bits}, seed=3)
            self.assertEqual(task.final_target[0], answer, bits)
            self.assertEqual(task.inputs.shape, (10, 2))
            self.assertEqual(int(task.inputs[:, 1].sum()), 2)

    def test_temporal_xor_layout(self) -> None:
        task = generate_task(TaskKind.TEMPORAL_XOR, {"length": 10, "gap": 3, "flagged_bits": (1, 0)}, seed=0)
        self.assertEqual(list(np.flatnonzero(task.inputs[:, 1])), [5, 9])
        self.assertEqual(list(np.flatnonzero(task.inputs[:, 0])), [5, 9])
        self.assertEqual((task.inputs[5, 0], task.inputs[9, 0]), (1.0, -1.0))
        self.assertEqual(list(task.targets[:, 0]), [0.0] * 9 + [1.0])
        noisy = generate_task(TaskKind.TEMPORAL_XOR, {"length": 10, "distractors": True}, seed=0)
        self.assertTrue(np.all(np.abs(noisy.inputs[:, 0]) == 1.0))

    def test_delayed_copy(self) -> None:
        task = generate_task(TaskKind.DELAYED_COPY, {"length": 6, "delay": 0, "n_symbols": 3}, seed=1)
        self.assertTrue(np.array_equal(task.final_target, task.inputs[-1]))
        task = generate_task(TaskKind.DELAYED_COPY, {"length": 6, "delay": 2, "n_symbols": 3}, seed=1)
        self.assertTrue(np.array_equal(task.final_target, task.inputs[3]))

    def test_invalid_task_params(self) -> None:
        with self.assertRaises(ValueError):
            generate_task(TaskKind.DELAYED_COPY, {"length": 3, "delay": 3}, seed=0)
        with self.assertRaises(ValueError):
            generate_task(TaskKind.DELAYED_COPY, {"length": 3, "delay": -1}, seed=0)
        with self.assertRaises(ValueError):
            generate_task(TaskKind.TEMPORAL_XOR, {"length": 2}, seed=0)
        with self.assertRaises(ValueError):
            generate_task(TaskKind.TEMPORAL_XOR, {"length": 5, "flagged_bits": (2, 0)}, seed=0)
        with self.assertRaises(ValueError):
            generate_task(TaskKind.TEMPORAL_XOR, {"length": 5, "gap": 5}, seed=0)
        with self.assertRaises(ValueError):
            generate_task("sorting", {"length": 5}, seed=0)

    def test_pattern_sum_target_is_the_mean(self) -> None:
        task = generate_task(TaskKind.PATTERN_SUM, {"length": 7, "input_dim": 3}, seed=2)
        self.assertTrue(np.allclose(task.final_target, task.inputs.mean(axis=0)))

    def test_same_seed_same_instance(self) -> None:
        for kind in TaskKind:
            a = generate_task(kind, {"length": 8}, seed=9)
            b = generate_task(kind, {"length": 8}, seed=9)
            self.assertTrue(np.array_equal(a.inputs, b.inputs), kind.value)
            self.assertTrue(np.array_equal(a.targets, b.targets), kind.value)

    def test_stream_pool_cycles_seeds(self) -> None:
        seeds = [task.seed for task in itertools.islice(task_stream(TaskKind.PATTERN_SUM, {"length": 3}, 5, pool=2), 5)]
        self.assertEqual(seeds, [5, 6, 5, 6, 5])
        seeds = [task.seed for task in itertools.islice(task_stream(TaskKind.PATTERN_SUM, {"length": 3}, 5), 3)]
        self.assertEqual(seeds, [5, 6, 7])
        with self.assertRaises(ValueError):
            task_stream(TaskKind.PATTERN_SUM, {"length": 3}, 5, pool=0)


class TestGradientAlignment(unittest.TestCase):

    def setUp(self) -> None:
        rng = np.random.default_rng(0)
        self.g = {"a": rng.standard_normal((2, 3)), "b": rng.standard_normal((1, 4))}

    def test_identical(self) -> None:
        report = gradient_alignment(self.g, self.g)
        self.assertAlmostEqual(report.cosine, 1.0, places=12)
        self.assertEqual(report.relative_l2, 0.0)
        self.assertEqual(sorted(report.per_group), ["a", "b"])

    def test_opposite(self) -> None:
        negated = {gid: -value for gid, value in self.g.items()}
        report = gradient_alignment(negated, self.g)
        self.assertAlmostEqual(report.cosine, -1.0, places=12)
        self.assertAlmostEqual(report.relative_l2, 2.0, places=12)

    def test_orthogonal(self) -> None:
        report = gradient_alignment({"a": np.array([[1.0, 0.0]])}, {"a": np.array([[0.0, 1.0]])})
        self.assertEqual(report.cosine, 0.0)

    def test_zero_vectors(self) -> None:
        zero = {"a": np.zeros((1, 2))}
        self.assertEqual(gradient_alignment(zero, zero).cosine, 1.0)
        self.assertEqual(gradient_alignment(zero, {"a": np.ones((1, 2))}).cosine, 0.0)

    def test_mismatch(self) -> None:
        with self.assertRaises(ShapeError):
            gradient_alignment(self.g, {"a": self.g["a"]})
        with self.assertRaises(ShapeError):
            gradient_alignment(self.g, {"a": self.g["a"], "b": np.zeros((4, 1))})


class TestTrainConfig(unittest.TestCase):

    def test_validation(self) -> None:
        with self.assertRaises(ValueError):
            TrainConfig(learning_rate=-0.1)
        with self.assertRaises(ValueError):
            TrainConfig(episodes=0)
        with self.assertRaises(ValueError):
            TrainConfig(algorithm=Algorithm.BPTT, update_timing=UpdateTiming.ONLINE)
        with self.assertRaises(ValueError):
            TrainConfig(algorithm="sgd")
        config = TrainConfig(algorithm="deep_rtrl", update_timing="online")
        self.assertIs(config.algorithm, Algorithm.DEEP_RTRL)

    def test_trace_mode_defaults_to_the_spec(self) -> None:
        self.assertIsNone(TrainConfig().trace_mode)
        self.assertIs(TrainConfig(trace_mode="diag_everywhere").trace_mode, TraceMode.DIAG_EVERYWHERE)
        spec = track_all(NetworkSpec(input_dim=2, layers=(LayerSpec("l1", 3), LayerSpec("l2", 3)), readout_dim=2,
                                     trace_mode=TraceMode.DIAG_EVERYWHERE))
        tasks = [generate_task(TaskKind.PATTERN_SUM, {"length": 4}, 0)]
        inherited = train(spec, TrainConfig(episodes=1), tasks)
        explicit = train(spec, TrainConfig(episodes=1, trace_mode=TraceMode.DIAG_EVERYWHERE), tasks)
        other = train(spec, TrainConfig(episodes=1, trace_mode=TraceMode.DIAG_HOME_DENSE_ABOVE), tasks)
        self.assertTrue(np.array_equal(inherited.params["l1.W_in"], explicit.params["l1.W_in"]))
        self.assertFalse(np.array_equal(inherited.params["l1.W_in"], other.params["l1.W_in"]))


class TestTrain(unittest.TestCase):
    '''
    Test suite for ``train``.
    '''

    def setUp(self) -> None:
        layers = (LayerSpec("l1", 3), LayerSpec("l2", 3))
        self.spec = track_all(NetworkSpec(input_dim=2, layers=layers, readout_dim=2,
                                          loss_timesteps=LossTimesteps.EVERY_STEP))
        self.task_params = {"length": 4, "input_dim": 2}
        self.out_dir = tempfile.mkdtemp()

    def tearDown(self) -> None:
        shutil.rmtree(self.out_dir)

    def stream(self):
        return task_stream(TaskKind.PATTERN_SUM, self.task_params, 0)

    def test_zero_learning_rate_keeps_params(self) -> None:
        config = TrainConfig(algorithm=Algorithm.DEEP_EPROP, learning_rate=0.0, episodes=3)
        result = train(self.spec, config, self.stream())
        start = init_params(self.spec, config.seed)
        for group in start:
            self.assertTrue(np.array_equal(group.matrix, result.params[group.group_id]), group.group_id)
        self.assertEqual([row.episode for row in result.metrics], [0, 1, 2])

    def test_single_update_is_a_gradient_step(self) -> None:
        config = TrainConfig(algorithm=Algorithm.BPTT, learning_rate=0.5, episodes=1)
        task = generate_task(TaskKind.PATTERN_SUM, self.task_params, 0)
        start = init_params(self.spec, config.seed)
        grad = bptt_gradient(self.spec, start, task.inputs, task.targets)
        result = train(self.spec, config, [task])
        for gid, g in grad.items():
            self.assertTrue(np.allclose(result.params[gid], start[gid] - 0.5 * g, rtol=0, atol=1e-12), gid)

    def test_exact_methods_follow_the_same_trajectory(self) -> None:
        '''
        **Purpose:**
        - BPTT, deep RTRL and the path sum produce the same gradient, so training
          with any of them visits the same parameters episode after episode.
        '''
        results = {}
        for algorithm in (Algorithm.BPTT, Algorithm.DEEP_RTRL, Algorithm.PATH_SUM):
            config = TrainConfig(algorithm=algorithm, learning_rate=0.2, episodes=10)
            results[algorithm] = train(self.spec, config, self.stream())
        reference = results[Algorithm.BPTT]
        for algorithm in (Algorithm.DEEP_RTRL, Algorithm.PATH_SUM):
            losses = [row.loss for row in results[algorithm].metrics]
            self.assertTrue(np.allclose(losses, [row.loss for row in reference.metrics], rtol=0, atol=1e-8))
            for group in reference.params:
                diff = np.max(np.abs(results[algorithm].params[group.group_id] - group.matrix))
                self.assertLess(diff, 1e-8, (algorithm.value, group.group_id))

    def test_compare_to_bptt(self) -> None:
        config = TrainConfig(algorithm=Algorithm.DEEP_RTRL, learning_rate=0.1, episodes=2, compare_to_bptt=True)
        result = train(self.spec, config, self.stream())
        for row in result.metrics:
            self.assertAlmostEqual(row.cosine_vs_bptt, 1.0, places=9)
            self.assertLess(row.rel_l2_vs_bptt, 1e-9)
        plain = train(self.spec, TrainConfig(episodes=1), self.stream())
        self.assertIsNone(plain.metrics[0].cosine_vs_bptt)

    def test_online_updates(self) -> None:
        frozen = train(self.spec, TrainConfig(algorithm=Algorithm.DEEP_EPROP, learning_rate=0.0, episodes=2,
                                              update_timing=UpdateTiming.ONLINE), self.stream())
        ended = train(self.spec, TrainConfig(algorithm=Algorithm.DEEP_EPROP, learning_rate=0.0, episodes=2),
                      self.stream())
        self.assertEqual([row.loss for row in frozen.metrics], [row.loss for row in ended.metrics])

        online = train(self.spec, TrainConfig(algorithm=Algorithm.DEEP_EPROP, learning_rate=0.3, episodes=1,
                                              update_timing=UpdateTiming.ONLINE), self.stream())
        start = init_params(self.spec, 0)
        self.assertFalse(np.array_equal(online.params["l1.W_in"], start["l1.W_in"]))

    def test_online_updates_reduce_xor_loss(self) -> None:
        spec = track_all(NetworkSpec(input_dim=2, layers=(LayerSpec("l1", 4), LayerSpec("l2", 4)), readout_dim=1,
                                     loss_timesteps=LossTimesteps.EVERY_STEP))
        table = [generate_task(TaskKind.TEMPORAL_XOR, {"length": 4, "flagged_bits": bits}, seed=0)
                 for bits in ((0, 0), (0, 1), (1, 0), (1, 1))]
        config = TrainConfig(algorithm=Algorithm.DEEP_EPROP, learning_rate=0.1, episodes=400,
                             update_timing=UpdateTiming.ONLINE, log_every=0)
        result = train(spec, config, itertools.cycle(table))
        losses = [row.loss for row in result.metrics]
        self.assertTrue(np.all(np.isfinite(losses)))
        self.assertLess(np.mean(losses[-40:]), np.mean(losses[:40]))

    def test_stream_too_short(self) -> None:
        with self.assertRaises(ValueError):
            train(self.spec, TrainConfig(episodes=3), [generate_task(TaskKind.PATTERN_SUM, self.task_params, 0)])

    def test_divergence(self) -> None:
        spec = NetworkSpec(input_dim=1, layers=(LayerSpec("l1", 2, ActivationKind.LINEAR),), readout_dim=1,
                           tracked_groups=("l1.W_rec",))
        params = init_params(spec, 0)
        params = params.replace({"l1.W_rec": 1e200 * np.eye(2), "l1.W_in": np.ones((2, 1)),
                                 "W_out": np.ones((1, 2))})
        task = generate_task(TaskKind.PATTERN_SUM, {"length": 5, "input_dim": 1}, 0)
        with np.errstate(all="ignore"):
            with self.assertRaises(DivergenceError) as ctx:
                train(spec, TrainConfig(algorithm=Algorithm.BPTT, episodes=1), [task], params)
        self.assertEqual(ctx.exception.episode, 0)

    def test_metrics_csv(self) -> None:
        path = os.path.join(self.out_dir, "metrics.csv")
        write_metrics_csv([MetricsRow(0, 0.5), MetricsRow(1, 0.25, 0.9, 0.1)], path)
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
        self.assertEqual(rows[0], ["episode", "loss", "cosine_vs_bptt", "rel_l2_vs_bptt"])
        self.assertEqual(rows[1], ["0", "0.5", "", ""])
        self.assertEqual(rows[2], ["1", "0.25", "0.9", "0.1"])

    @unittest.skipUnless(os.getenv("DEEP_EPROP_SLOW") == "1", "set DEEP_EPROP_SLOW=1 to run training runs")
    def test_temporal_xor_is_learned(self) -> None:
        '''
        **Purpose:**
        - A 2-layer width-8 network learns temporal XOR over 10 steps within 3000
          episode-end updates with deep E-prop, deep RTRL and the BPTT baseline.
        '''
        spec = track_all(NetworkSpec(input_dim=2, layers=(LayerSpec("l1", 8), LayerSpec("l2", 8)), readout_dim=1,
                                     trace_mode=TraceMode.DIAG_HOME_DENSE_ABOVE))
        for algorithm in (Algorithm.DEEP_EPROP, Algorithm.DEEP_RTRL, Algorithm.BPTT):
            config = TrainConfig(algorithm=algorithm, learning_rate=0.1, episodes=3000, log_every=0)
            result = train(spec, config, task_stream(TaskKind.TEMPORAL_XOR, {"length": 10}, 0))
            losses = [row.loss for row in result.metrics]
            self.assertLess(np.mean(losses[-100:]), 0.05, algorithm.value)


if __name__ == '__main__':
    unittest.main()
