'''
@description:
- Unit tests for the verification battery, the spec checks and the report writers.
'''

import json
import os
import shutil
import tempfile
import unittest

from deep_eprop.network import LayerSpec, NetworkSpec
from deep_eprop.utils.report_utils import ensure_out_dir, json_safe, render_template, write_json
from deep_eprop.verify import (DEFAULT_TOLERANCES, Check, check_eprop_alignment, check_eprop_exact,
                               check_online_contract, check_path_counts, failed_checks, random_chain_instance,
                               random_dag_instance, resolve_tolerances, verify_spec)


class TestBatteryChecks(unittest.TestCase):
    '''
    Test suite for the individual battery checks in quick mode.
    '''

    def test_path_counts(self) -> None:
        check = check_path_counts(0, True, None)
        self.assertTrue(check.passed, check.detail)

    def test_eprop_exact_regimes(self) -> None:
        check = check_eprop_exact(0, True, DEFAULT_TOLERANCES["eprop"])
        self.assertTrue(check.passed, check.detail)
        self.assertGreater(check.instances, 0)

    def test_eprop_alignment(self) -> None:
        check = check_eprop_alignment(0, True, None)
        self.assertTrue(check.passed, check.detail)
        self.assertIn("median", check.detail)

    def test_online_contract(self) -> None:
        check = check_online_contract(0, True, None)
        self.assertTrue(check.passed, check.detail)
        self.assertEqual(check.worst_error, 0.0)


class TestInstances(unittest.TestCase):

    def test_instances_are_seeded(self) -> None:
        a, b = random_chain_instance(3, 2, 4, 5), random_chain_instance(3, 2, 4, 5)
        self.assertEqual(a.spec, b.spec)
        self.assertTrue((a.inputs == b.inputs).all())
        self.assertEqual(random_dag_instance(8).spec, random_dag_instance(8).spec)

    def test_equal_widths(self) -> None:
        inst = random_chain_instance(1, 3, 5, 4, equal_widths=True)
        self.assertEqual({layer.hidden_dim for layer in inst.spec.layers}, {5})

    def test_random_widths_are_at_least_two(self) -> None:
        widths = [layer.hidden_dim for seed in range(30) for layer in random_chain_instance(seed, 4, 3, 2).spec.layers]
        self.assertEqual(set(widths), {2, 3})
        with self.assertRaises(ValueError):
            random_chain_instance(0, 2, 1, 3)


class TestSpecChecks(unittest.TestCase):

    def test_chain_spec(self) -> None:
        spec = NetworkSpec(input_dim=2, layers=(LayerSpec("l1", 3), LayerSpec("l2", 3)), readout_dim=1)
        checks = verify_spec(spec, seed=1, length=4)
        names = [check.name for check in checks]
        self.assertEqual(names[:3], ["spec_deep_rtrl_vs_bptt", "spec_bptt_vs_finite_diff", "spec_bptt_vs_paths"])
        self.assertIn("spec_online_contract", names)
        self.assertEqual(failed_checks(checks), [])

    def test_unequal_widths_skip_diag_everywhere(self) -> None:
        spec = NetworkSpec(input_dim=2, layers=(LayerSpec("l1", 3), LayerSpec("l2", 4)), readout_dim=1)
        checks = {check.name: check for check in verify_spec(spec, seed=0, length=3)}
        skipped = checks["spec_eprop_alignment_diag_everywhere"]
        self.assertTrue(skipped.skipped)
        self.assertFalse(skipped.required)
        self.assertFalse(checks["spec_eprop_alignment_diag_home_dense_above"].skipped)

    def test_tolerances(self) -> None:
        self.assertEqual(resolve_tolerances(), DEFAULT_TOLERANCES)
        self.assertEqual(set(resolve_tolerances(0.5).values()), {0.5})
        with self.assertRaises(ValueError):
            resolve_tolerances(-1.0)

    def test_failed_checks_ignore_informational(self) -> None:
        checks = [Check("a", True), Check("b", False), Check("c", False, required=False)]
        self.assertEqual(failed_checks(checks), ["b"])


class TestReports(unittest.TestCase):

    def setUp(self) -> None:
        self.out_dir = tempfile.mkdtemp()

    def tearDown(self) -> None:
        shutil.rmtree(self.out_dir)

    def test_json_is_strict(self) -> None:
        path = os.path.join(self.out_dir, "report.json")
        write_json({"error": float("inf"), "values": [1.0, float("nan")]}, path)
        with open(path, encoding="utf-8") as f:
            self.assertEqual(json.load(f), {"error": "inf", "values": [1.0, "nan"]})
        self.assertEqual(json_safe((1, 2)), [1, 2])

    def test_out_dir_must_be_a_directory(self) -> None:
        path = os.path.join(self.out_dir, "file")
        with open(path, "w", encoding="utf-8") as f:
            f.write("x")
        with self.assertRaises(ValueError):
            ensure_out_dir(path)
        self.assertTrue(os.path.isdir(ensure_out_dir(os.path.join(self.out_dir, "a", "b"))))

    def test_markdown_report(self) -> None:
        checks = [
            {"name": "deep_rtrl_vs_bptt", "passed": False, "required": True, "worst_error": 1e-3,
             "tolerance": 1e-9, "instances": 3, "detail": "worst on chain", "skipped": False},
            {"name": "eprop_alignment", "passed": True, "required": False, "worst_error": None,
             "tolerance": None, "instances": 5, "detail": "", "skipped": False},
        ]
        text = render_template("verify_report.md.j2", generated_at="now", spec=None, seed=0, quick=True,
                               passed=False, checks=checks)
        self.assertIn("**FAIL**", text)
        self.assertIn("**FAILED**", text)
        self.assertIn("(informational)", text)
        self.assertIn("built-in battery only", text)
        self.assertIn("`deep_rtrl_vs_bptt`: worst on chain", text)


if __name__ == '__main__':
    unittest.main()
