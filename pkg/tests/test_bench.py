'''
@description:
- Unit tests for the scaling benchmark: counted work and storage of each algorithm,
  slope fitting, skipped points and the CSV report.
'''

import csv
import io
import os
import shutil
import tempfile
import unittest

from deep_eprop.bench import (CSV_COLUMNS, SweepResult, SweepRow, emit_scaling_report, fit_slope, run_point,
                              run_sweep, scaling_slopes)


class TestScaling(unittest.TestCase):
    '''
    Test suite for the counts produced by ``run_sweep``.
    '''

    def test_rtrl_flops_grow_as_fourth_power(self) -> None:
        result = run_sweep(["rtrl"], [4, 8, 16], [1], [4], timed=False)
        rows = sorted(result.select("rtrl"), key=lambda r: r.H)
        ratio = rows[1].flops_per_step / rows[0].flops_per_step
        self.assertGreaterEqual(ratio, 14)
        self.assertLessEqual(ratio, 18)
        slope = fit_slope([r.H for r in rows], [r.flops_per_step for r in rows])
        self.assertGreaterEqual(slope, 3.7)
        self.assertLessEqual(slope, 4.2)

    def test_eprop_storage_does_not_grow_with_length(self) -> None:
        result = run_sweep(["deep_eprop", "eprop"], [4], [1], [4, 64, 256], timed=False)
        for algorithm in ("deep_eprop", "eprop"):
            peaks = {row.peak_trace_values for row in result.select(algorithm)}
            self.assertEqual(peaks, {16}, algorithm)

    def test_deep_eprop_storage_is_depth_times_parameters(self) -> None:
        result = run_sweep(["deep_eprop"], [4], [3], [4, 32], timed=False)
        self.assertEqual({row.peak_trace_values for row in result.select("deep_eprop")}, {3 * 16})

    def test_bptt_storage_is_linear_in_length(self) -> None:
        result = run_sweep(["bptt"], [4], [2], [8, 16], timed=False)
        rows = sorted(result.select("bptt"), key=lambda r: r.T)
        ratio = rows[1].stored_activation_values / rows[0].stored_activation_values
        self.assertGreaterEqual(ratio, 1.9)
        self.assertLessEqual(ratio, 2.1)

    def test_deep_rtrl_storage_is_linear_in_depth(self) -> None:
        result = run_sweep(["deep_rtrl"], [4], [1, 2, 4], [4], timed=False)
        rows = sorted(result.select("deep_rtrl"), key=lambda r: r.L)
        self.assertEqual([r.peak_trace_values for r in rows], [64, 128, 256])
        self.assertAlmostEqual(fit_slope([r.L for r in rows], [r.peak_trace_values for r in rows]), 1.0, places=9)

    def test_counts_do_not_depend_on_seed(self) -> None:
        a = run_point("deep_rtrl", 4, 2, 5, seed=0, timed=False)
        b = run_point("deep_rtrl", 4, 2, 5, seed=7, timed=False)
        self.assertEqual((a.flops_per_step, a.peak_trace_values, a.stored_activation_values),
                         (b.flops_per_step, b.peak_trace_values, b.stored_activation_values))
        self.assertIsNone(a.wall_seconds)


class TestSweepValidation(unittest.TestCase):

    def test_single_layer_algorithms_skip_deep_points(self) -> None:
        row = run_point("rtrl", 4, 2, 4, seed=0)
        self.assertFalse(row.ok)
        self.assertTrue(row.status.startswith("skipped"))

    def test_trace_limit(self) -> None:
        row = run_point("deep_rtrl", 8, 2, 4, seed=0, trace_limit=100)
        self.assertFalse(row.ok)
        self.assertIn("exceed", row.status)

    def test_trace_limit_uses_per_synapse_estimate_for_eprop(self) -> None:
        row = run_point("deep_eprop", 8, 2, 4, seed=0, timed=False, trace_limit=200)
        self.assertTrue(row.ok, row.status)
        self.assertEqual(row.peak_trace_values, 2 * 8 * 8)
        self.assertFalse(run_point("deep_eprop", 8, 2, 4, seed=0, timed=False, trace_limit=100).ok)

    def test_dimensions_must_be_positive(self) -> None:
        with self.assertRaises(ValueError):
            run_sweep(["bptt"], [0, 4], [1], [4])
        with self.assertRaises(ValueError):
            run_sweep(["bptt"], [4], [1], [])

    def test_unknown_algorithm(self) -> None:
        with self.assertRaises(ValueError):
            run_sweep(["sgd"], [4], [1], [4])


class TestSlopes(unittest.TestCase):

    def test_fit_slope(self) -> None:
        self.assertAlmostEqual(fit_slope([2, 4, 8], [5, 5, 5]), 0.0, places=12)
        self.assertAlmostEqual(fit_slope([2, 4, 8], [2 ** 4, 4 ** 4, 8 ** 4]), 4.0, places=9)

    def test_short_series_gives_a_notice(self) -> None:
        result = SweepResult([SweepRow("rtrl", 4, 1, 4, 10.0, 5, 5), SweepRow("rtrl", 8, 1, 4, 160.0, 10, 10)])
        fits, notices = scaling_slopes(result)
        self.assertEqual(fits, [])
        self.assertEqual(len(notices), 1)
        self.assertIn("need 3", notices[0])

    def test_series_are_fitted_per_metric(self) -> None:
        rows = [SweepRow("rtrl", h, 1, 4, float(h ** 4), h ** 3, 2 * h) for h in (2, 4, 8)]
        rows.append(SweepRow("rtrl", 16, 2, 4, status="skipped: single-layer algorithm"))
        fits, notices = scaling_slopes(SweepResult(rows))
        self.assertEqual(notices, [])
        slopes = {fit["metric"]: fit["slope"] for fit in fits}
        self.assertAlmostEqual(slopes["flops_per_step"], 4.0, places=9)
        self.assertAlmostEqual(slopes["peak_trace_values"], 3.0, places=9)
        self.assertAlmostEqual(slopes["stored_activation_values"], 1.0, places=9)
        self.assertEqual(fits[0]["fixed"], {"L": 1, "T": 4})

    def test_constant_series_reports_zero_slopes(self) -> None:
        rows = [SweepRow("rtrl", h, 1, 4, 5.0, 5, 5) for h in (2, 4, 8)]
        _, fits, notices = emit_scaling_report(SweepResult(rows))
        self.assertEqual(notices, [])
        self.assertEqual(len(fits), 3)
        for fit in fits:
            self.assertAlmostEqual(fit["slope"], 0.0, places=12, msg=fit["metric"])


class TestReport(unittest.TestCase):

    def setUp(self) -> None:
        self.out_dir = tempfile.mkdtemp()

    def tearDown(self) -> None:
        shutil.rmtree(self.out_dir)

    def test_csv_report(self) -> None:
        result = run_sweep(["bptt", "rtrl"], [3], [1, 2], [4], timed=False)
        path = os.path.join(self.out_dir, "scaling.csv")
        text, _, _ = emit_scaling_report(result, path)
        rows = list(csv.reader(io.StringIO(text)))
        self.assertEqual(tuple(rows[0]), CSV_COLUMNS)
        self.assertEqual(len(rows), 5)
        skipped = [row for row in rows[1:] if row[-1] != "ok"]
        self.assertEqual(len(skipped), 1)
        self.assertEqual(skipped[0][:3], ["rtrl", "3", "2"])
        self.assertTrue(all(row[CSV_COLUMNS.index("wall_seconds")] == "" for row in rows[1:]))
        with open(path, encoding="utf-8") as f:
            self.assertEqual(f.read(), text)


if __name__ == '__main__':
    unittest.main()
