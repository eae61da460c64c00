#!/usr/bin/env python3
"""
Test script for the fractional porous-medium lab
Runs every suite; the utility tests live here, the rest in test_*.py
"""

import unittest
import sys
import os
import json
import math
import shutil
import tempfile
from pathlib import Path

import numpy as np

# Add the main and src directories to the path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), 'src'))

from utils import (ConfigError, DomainError, FitError, LabError, PreconditionError, StepError,
                   StructuralError, TrajectoryFormatError, read_json, to_jsonable, write_csv,
                   write_json)

import test_operators
import test_kernels
import test_elliptic
import test_evolution
import test_estimates
import test_cli


class TestErrors(unittest.TestCase):
    """Test the error hierarchy and its exit codes"""

    def test_exit_codes(self):
        """Test configuration, numerical and precondition errors map to 1, 2, 3"""
        self.assertEqual(ConfigError("x").exit_code, 1)
        self.assertEqual(DomainError("x").exit_code, 1)
        self.assertEqual(TrajectoryFormatError("x").exit_code, 1)
        self.assertEqual(StructuralError("x").exit_code, 2)
        self.assertEqual(FitError("x").exit_code, 2)
        self.assertEqual(StepError("x").exit_code, 2)
        self.assertEqual(PreconditionError("x").exit_code, 3)

    def test_common_base(self):
        """Test every library error is a LabError"""
        for cls in (ConfigError, DomainError, StructuralError, FitError, StepError, PreconditionError):
            self.assertTrue(issubclass(cls, LabError))


class TestFileHelpers(unittest.TestCase):
    """Test JSON and CSV writers"""

    def setUp(self):
        self.temp_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_jsonable(self):
        """Test numpy values and non-finite floats become strict JSON"""
        data = to_jsonable({"a": np.arange(3), "b": np.float64(0.5), "c": math.inf, 1: (np.int64(2), True)})
        self.assertEqual(data, {"a": [0, 1, 2], "b": 0.5, "c": "inf", "1": [2, True]})
        json.dumps(data, allow_nan=False)

    def test_write_and_read_json(self):
        """Test nested directories are created and the file ends with a newline"""
        path = self.temp_dir / "nested" / "data.json"
        write_json(path, {"x": np.array([1.5, 2.5])})
        self.assertTrue(path.read_text().endswith("\n"))
        self.assertEqual(read_json(path), {"x": [1.5, 2.5]})

    def test_read_json_errors(self):
        """Test missing and malformed files raise TrajectoryFormatError"""
        with self.assertRaises(TrajectoryFormatError):
            read_json(self.temp_dir / "missing.json")
        broken = self.temp_dir / "broken.json"
        broken.write_text("{")
        with self.assertRaises(TrajectoryFormatError):
            read_json(broken)

    def test_csv_full_precision(self):
        """Test floats are written with repr precision"""
        path = self.temp_dir / "table.csv"
        write_csv(path, ("x", "y"), [(0.1, 1.0 / 3.0), (np.float64(2.0), 7)])
        lines = path.read_text().splitlines()
        self.assertEqual(lines[0], "x,y")
        self.assertEqual(lines[1], f"0.1,{1.0 / 3.0!r}")
        self.assertEqual(lines[2], "2.0,7")


def run_tests():
    """Run all tests"""
    print("🧪 Running Fractional Porous-Medium Lab Tests")
    print("=" * 40)

    # Create test suite
    test_suite = unittest.TestSuite()
    loader = unittest.TestLoader()

    # Add test cases
    test_suite.addTest(loader.loadTestsFromTestCase(TestErrors))
    test_suite.addTest(loader.loadTestsFromTestCase(TestFileHelpers))
    for module in (test_operators, test_kernels, test_elliptic, test_evolution, test_estimates, test_cli):
        test_suite.addTest(loader.loadTestsFromModule(module))

    # Run tests
    runner = unittest.TextTestRunner(verbosity=2)
    result = runner.run(test_suite)

    # Print results
    if result.wasSuccessful():
        print("\n✅ All tests passed!")
        return True
    else:
        print(f"\n❌ {len(result.failures)} test(s) failed")
        print(f"❌ {len(result.errors)} error(s) occurred")
        return False


if __name__ == "__main__":
    success = run_tests()
    sys.exit(0 if success else 1)
