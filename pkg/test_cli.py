#!/usr/bin/env python3
"""
Tests for the fpme command line and the settings manager
"""

import os
import sys
import json
import shutil
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

# Add the src directory to the path
sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), 'src'))

from main import main
from settings_manager import CHECKERS, ExperimentSettings
from evolution import Trajectory
from kernels import PASS, SKIPPED


class CliTestCase(unittest.TestCase):
    """Temporary workspace and a quiet main() runner"""

    def setUp(self):
        self.temp_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def write_config(self, name, settings):
        path = self.temp_dir / name
        path.write_text(json.dumps(settings))
        return str(path)

    def run_main(self, *argv):
        with patch('builtins.print'):
            return main(list(argv) + ["--no-log-file", "--log-level", "ERROR"])

    def read_json(self, *parts):
        return json.loads(self.temp_dir.joinpath(*parts).read_text())


class TestBuildOperator(CliTestCase):
    """Test the build-operator command"""

    def test_censored_order_out_of_range(self):
        """Test CFL with s <= 1/2 is a configuration error"""
        config = self.write_config("cfl.json", {"operator": "CFL", "s": 0.4, "n": 32})
        code = self.run_main("build-operator", "--config", config, "--out", str(self.temp_dir / "out"))
        self.assertEqual(code, 1)
        self.assertFalse((self.temp_dir / "out" / "operator.json").exists())

    def test_spectral_bundle(self):
        """Test operator.json, bounds.json and the zero-order exponent -2s"""
        config = self.write_config("sfl.json", {"operator": "SFL", "s": 0.5, "n": 256})
        code = self.run_main("build-operator", "--config", config, "--out", str(self.temp_dir / "out"))
        self.assertEqual(code, 0)

        operator = self.read_json("out", "operator.json")
        self.assertEqual(operator["kind"], "SFL")
        self.assertEqual(len(operator["phi1"]), 256)
        bounds = self.read_json("out", "bounds.json")
        self.assertEqual(set(bounds), {"kernel", "green", "exponent_fits"})
        self.assertEqual(bounds["green"]["verdict"], SKIPPED)
        self.assertAlmostEqual(bounds["exponent_fits"]["B"]["beta"], -1.0, delta=0.2)
        self.assertAlmostEqual(bounds["exponent_fits"]["phi1"]["beta"], 1.0, delta=0.05)

    def test_unknown_setting(self):
        """Test an unknown key in the config file is rejected"""
        config = self.write_config("bad.json", {"n": 32, "bogus": 1})
        code = self.run_main("build-operator", "--config", config, "--out", str(self.temp_dir / "out"))
        self.assertEqual(code, 1)

    def test_exported_config_reloads(self):
        """Test config.json loads back to the same resolved settings"""
        config = self.write_config("rfl.json", {"operator": "RFL", "s": 0.3, "n": 32})
        self.assertEqual(self.run_main("build-operator", "--config", config, "--out", str(self.temp_dir / "out")), 0)
        exported = ExperimentSettings(self.temp_dir / "out" / "config.json")
        self.assertEqual(exported.errors, [])
        self.assertEqual(exported.get("operator"), "RFL")
        self.assertEqual(exported.settings, ExperimentSettings(config).settings)


class TestSolveProfile(CliTestCase):
    """Test the solve-profile command"""

    def test_deterministic_output(self):
        """Test two runs write byte-identical files"""
        config = self.write_config("profile.json", {"s": 0.5, "m": 2.0, "n": 64})
        for name in ("a", "b"):
            code = self.run_main("solve-profile", "--config", config, "--out", str(self.temp_dir / name))
            self.assertEqual(code, 0)
        for filename in ("profile.csv", "profile_report.json", "config.json"):
            first = (self.temp_dir / "a" / filename).read_bytes()
            second = (self.temp_dir / "b" / filename).read_bytes()
            self.assertEqual(first, second, filename)

        header = (self.temp_dir / "a" / "profile.csv").read_text().splitlines()[0]
        self.assertEqual(header, "x,dist,S,phi1")
        report = self.read_json("a", "profile_report.json")
        self.assertEqual(report["sigma"], 1.0)
        self.assertFalse(report["critical"])


class TestEvolveAndAnalyze(CliTestCase):
    """Test evolve followed by analyze"""

    def evolve(self, settings, name="traj"):
        config = self.write_config(f"{name}.json", settings)
        code = self.run_main("evolve", "--config", config, "--out", str(self.temp_dir / name))
        self.assertEqual(code, 0)
        return self.temp_dir / name

    def test_probe_times_hit_exactly(self):
        """Test the saved schedule contains every probe time"""
        directory = self.evolve({"n": 32, "t_end": 5.0, "probe_times": [1.0, 5.0]})
        traj = Trajectory.load(directory)
        self.assertIn(1.0, traj.times.tolist())
        self.assertEqual(traj.times[-1], 5.0)
        self.assertTrue((directory / "config.json").exists())

    def test_zero_datum(self):
        """Test a zero datum stays zero and analyze skips t_* checkers"""
        directory = self.evolve({"n": 32, "t_end": 1.0, "datum": "constant", "datum_params": {"c": 0.0}})
        traj = Trajectory.load(directory)
        self.assertTrue(traj.is_trivial)

        out = self.temp_dir / "analysis"
        self.assertEqual(self.run_main("analyze", "--trajectory", str(directory), "--out", str(out)), 0)
        analysis = self.read_json("analysis", "analysis.json")
        self.assertIsNone(analysis["t_star"])
        verdicts = {r["theorem"]: r["verdict"] for r in analysis["reports"]}
        self.assertEqual(len(verdicts), len(CHECKERS))
        self.assertEqual(verdicts["universal_lower"], SKIPPED)
        self.assertEqual(verdicts["asymptotics"], SKIPPED)

    def test_checker_subset(self):
        """Test analyze runs only the configured checkers"""
        directory = self.evolve({"n": 32, "t_end": 2.0})
        config = self.write_config("subset.json", {"checkers": ["time_monotonicity", "green_dissipation", "kato"]})
        out = self.temp_dir / "analysis"
        code = self.run_main("analyze", "--trajectory", str(directory), "--config", config, "--out", str(out))
        self.assertEqual(code, 0)
        analysis = self.read_json("analysis", "analysis.json")
        self.assertEqual([r["theorem"] for r in analysis["reports"]],
                         ["time_monotonicity", "green_dissipation", "kato"])
        self.assertEqual(analysis["reports"][2]["constants"]["samples"], 50)

    def test_corrupted_trajectory(self):
        """Test a damaged snapshot table is a configuration error"""
        directory = self.evolve({"n": 32, "t_end": 1.0})
        (directory / "snapshots.csv").write_text("t,x,u\n0.0,0.0\n")
        out = self.temp_dir / "analysis"
        self.assertEqual(self.run_main("analyze", "--trajectory", str(directory), "--out", str(out)), 1)

    def test_missing_trajectory(self):
        """Test analyze on an empty directory fails with exit code 1"""
        empty = self.temp_dir / "empty"
        empty.mkdir()
        self.assertEqual(self.run_main("analyze", "--trajectory", str(empty), "--out", str(self.temp_dir)), 1)


class TestReproduceFigure(CliTestCase):
    """Test the reproduce-figure command"""

    def test_unknown_figure(self):
        """Test figure 4 does not exist"""
        self.assertEqual(self.run_main("reproduce-figure", "4", "--out", str(self.temp_dir)), 1)

    def test_first_figure_bundle(self):
        """Test the figure 1 CSV columns, verdict file and that every claim holds"""
        config = self.write_config("fast.json", {"fast_n": 128})
        code = self.run_main("reproduce-figure", "1", "--fast", "--config", config, "--out", str(self.temp_dir))
        header = (self.temp_dir / "figure1_m2_s0.5.csv").read_text().splitlines()[0]
        self.assertEqual(header, "x,comparator,v_t1,v_t5")
        verdicts = self.read_json("figure1_verdicts.json")
        self.assertEqual(verdicts["n"], 128)
        cell = verdicts["cells"][0]
        self.assertEqual(cell["label"], "m2_s0.5")
        self.assertEqual(set(cell["claims"]),
                         {"linear_at_short_times", "matching_at_latest_probe", "matching_lower_bound"})
        for claim, holds in cell["claims"].items():
            self.assertTrue(holds, claim)
        self.assertEqual(verdicts["verdict"], PASS)
        self.assertEqual(code, 0)

    def test_second_figure_bundle(self):
        """Test figure 2 writes both cells and the small-s cell shows no matching behavior"""
        config = self.write_config("fast.json", {"fast_n": 128})
        code = self.run_main("reproduce-figure", "2", "--fast", "--config", config, "--out", str(self.temp_dir))
        self.assertIn(code, (0, 3))
        header = (self.temp_dir / "figure2_m4_s0.75.csv").read_text().splitlines()[0]
        self.assertEqual(header, "x,comparator,v_t30,v_t150")
        header = (self.temp_dir / "figure2_m4_s0.2.csv").read_text().splitlines()[0]
        self.assertEqual(header, "x,comparator,v_t150,v_t600")
        verdicts = self.read_json("figure2_verdicts.json")
        cells = {c["label"]: c for c in verdicts["cells"]}
        self.assertEqual(set(cells), {"m4_s0.75", "m4_s0.2"})
        self.assertEqual(set(cells["m4_s0.75"]["claims"]),
                         {"linear_longer_than_matching", "matching_at_latest_probe"})
        self.assertLess(cells["m4_s0.2"]["sigma"], 1.0)
        self.assertTrue(cells["m4_s0.2"]["claims"]["no_matching_behavior"])
        self.assertEqual(code == 0, verdicts["verdict"] == PASS)

    def test_third_figure_bundle(self):
        """Test figure 3 columns and the claims that hold at the fast grid size"""
        config = self.write_config("fast.json", {"fast_n": 128})
        code = self.run_main("reproduce-figure", "3", "--fast", "--config", config, "--out", str(self.temp_dir))
        self.assertIn(code, (0, 3))
        header = (self.temp_dir / "figure3_m2_s0.1.csv").read_text().splitlines()[0]
        self.assertEqual(header, "x,comparator,v_t4,v_t25,v_t40,v_t150")
        verdicts = self.read_json("figure3_verdicts.json")
        claims = verdicts["cells"][0]["claims"]
        self.assertTrue(claims["linear_at_short_times"])
        self.assertTrue(claims["vanishes_against_profile_power"])
        self.assertIn("comparator_exceeded_late", claims)
        self.assertEqual(code == 0, verdicts["verdict"] == PASS)


class TestArguments(CliTestCase):
    """Test argument parsing"""

    def test_unknown_command(self):
        """Test an unknown subcommand exits with code 1"""
        with patch('sys.stderr'):
            self.assertEqual(main(["transmogrify"]), 1)

    def test_analyze_needs_trajectory(self):
        """Test analyze without --trajectory exits with code 1"""
        with patch('sys.stderr'):
            self.assertEqual(main(["analyze"]), 1)


class TestExperimentSettings(CliTestCase):
    """Test settings validation, loading and export"""

    def test_defaults_are_valid(self):
        """Test the built-in defaults pass every rule"""
        settings = ExperimentSettings()
        self.assertEqual(settings.errors, [])
        self.assertEqual(settings.validate_applicability(), [])
        self.assertEqual(settings.get("operator"), "SFL")

    def test_set_validates(self):
        """Test invalid values are refused and valid ones stored"""
        settings = ExperimentSettings()
        self.assertFalse(settings.set("m", 1.0))
        self.assertFalse(settings.set("n", 4))
        self.assertFalse(settings.set("checkers", ["nonexistent"]))
        self.assertTrue(settings.set("checkers", ["kato"]))
        self.assertEqual(settings.get("checkers"), ["kato"])

    def test_missing_and_malformed_files(self):
        """Test unreadable files are recorded as errors"""
        self.assertTrue(ExperimentSettings(self.temp_dir / "missing.json").errors)
        broken = self.temp_dir / "broken.json"
        broken.write_text("{not json")
        self.assertTrue(ExperimentSettings(broken).errors)

    def test_applicability_rules(self):
        """Test cross-key problems are reported"""
        settings = ExperimentSettings()
        settings.set("probe_times", [20.0])
        settings.set("harnack_ball", [0.5, 0.3])
        problems = settings.validate_applicability()
        self.assertIn("probe times must not exceed t_end", problems)
        self.assertTrue(any("harnack_ball" in p for p in problems))

    def test_save_and_export(self):
        """Test save writes plain settings and export adds the wrapper"""
        path = self.temp_dir / "saved.json"
        settings = ExperimentSettings(path)
        self.assertTrue(settings.save_settings())
        self.assertEqual(json.loads(path.read_text())["n"], 512)

        exported = self.temp_dir / "export.json"
        self.assertTrue(settings.export_settings(exported, timestamp=True))
        wrapper = json.loads(exported.read_text())
        self.assertEqual(wrapper["version"], "1.0")
        self.assertIn("export_timestamp", wrapper)
        self.assertEqual(ExperimentSettings(exported).settings, settings.settings)


if __name__ == "__main__":
    unittest.main()
