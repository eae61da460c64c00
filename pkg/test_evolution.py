#!/usr/bin/env python3
"""
Tests for implicit time stepping, initial data and trajectory files
"""

import os
import sys
import shutil
import tempfile
import unittest
from dataclasses import replace
from pathlib import Path

import numpy as np

# Add the src directory to the path
sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), 'src'))

from elliptic import friendly_giant, solve_profile
from evolution import (EvolutionConfig, Trajectory, critical_time, delta_limit_study, evolve,
                       initial_datum, step_implicit, time_schedule, weighted_norm)
from operators import build_cfl, build_grid, build_rfl, build_sfl, compute_green
from utils import ConfigError, DomainError, TrajectoryFormatError


class TestSchedule(unittest.TestCase):
    """Test geometric time schedules"""

    def test_lands_on_probe_times(self):
        """Test probe times and t_end appear exactly"""
        cfg = EvolutionConfig(m=2.0, dt0=1e-3, growth=1.05, t_end=10.0, probe_times=(1.0, 5.0))
        times = time_schedule(cfg)
        self.assertEqual(times[0], 0.0)
        self.assertEqual(times[-1], 10.0)
        self.assertIn(1.0, times)
        self.assertIn(5.0, times)
        self.assertTrue(np.all(np.diff(times) > 0))

    def test_uniform_steps(self):
        """Test growth = 1 gives a uniform grid in time"""
        cfg = EvolutionConfig(m=2.0, dt0=0.25, growth=1.0, t_end=2.0)
        np.testing.assert_allclose(time_schedule(cfg), np.arange(9) * 0.25)

    def test_short_remainder_merged(self):
        """Test the final step is never shorter than a quarter step"""
        cfg = EvolutionConfig(m=2.0, dt0=0.3, growth=1.0, t_end=1.0)
        times = time_schedule(cfg)
        self.assertEqual(times[-1], 1.0)
        self.assertGreaterEqual(np.diff(times).min(), 0.25 * 0.3 - 1e-12)

    def test_invalid_config(self):
        """Test configuration validation names the problem"""
        with self.assertRaisesRegex(ConfigError, "m must be > 1"):
            EvolutionConfig(m=1.0)
        with self.assertRaisesRegex(ConfigError, "probe times"):
            EvolutionConfig(m=2.0, probe_times=(0.0,))
        with self.assertRaises(ConfigError):
            EvolutionConfig(m=2.0, growth=0.9)

    def test_config_dict_round_trip(self):
        """Test to_dict and from_dict agree"""
        cfg = EvolutionConfig(m=3.0, delta=0.1, probe_times=(2.0,))
        self.assertEqual(EvolutionConfig.from_dict(cfg.to_dict()), cfg)


class TestInitialData(unittest.TestCase):
    """Test the datum presets"""

    @classmethod
    def setUpClass(cls):
        cls.grid = build_grid(63)
        cls.op = build_sfl(cls.grid, 0.5)

    def test_bump(self):
        """Test the bump peaks at 1 at the origin and vanishes for |x| >= 1/2"""
        u0 = initial_datum("bump", self.grid, self.op)
        self.assertAlmostEqual(u0[self.grid.index_near(0.0)], 1.0, places=12)
        self.assertTrue(np.all(u0[np.abs(self.grid.nodes) >= 0.5] == 0))
        self.assertTrue(np.all(u0 >= 0))

    def test_scaled_presets(self):
        """Test c*Phi1, c*Phi1^p and constants"""
        np.testing.assert_allclose(initial_datum("c_phi1", self.grid, self.op, {"c": 2.0}), 2.0 * self.op.phi1)
        np.testing.assert_allclose(
            initial_datum("c_phi1_pow", self.grid, self.op, {"c": 1.0, "p": 0.5}), self.op.phi1 ** 0.5
        )
        np.testing.assert_array_equal(initial_datum("constant", self.grid, self.op, {"c": 0.0}), 0.0)

    def test_preset_errors(self):
        """Test missing parameters and unknown presets"""
        with self.assertRaises(ConfigError):
            initial_datum("c_phi1_pow", self.grid, self.op, {"c": 1.0})
        with self.assertRaises(ConfigError):
            initial_datum("c_profile", self.grid, self.op)
        with self.assertRaises(ConfigError):
            initial_datum("gaussian", self.grid, self.op)
        with self.assertRaises(ConfigError):
            initial_datum("bump", self.grid, self.op, {"c": -1.0})


class TestImplicitStep(unittest.TestCase):
    """Test one backward-Euler step"""

    @classmethod
    def setUpClass(cls):
        cls.grid = build_grid(64)
        cls.op = build_sfl(cls.grid, 0.5)
        cls.cfg = EvolutionConfig(m=2.0)

    def test_zero_stays_zero(self):
        """Test the zero datum is a fixed point"""
        u = step_implicit(np.zeros(self.grid.n), 0.1, self.op, self.cfg)
        np.testing.assert_array_equal(u, 0.0)

    def test_step_solves_equation(self):
        """Test u + dt A u^m = u_prev and positivity"""
        u_prev = initial_datum("bump", self.grid, self.op)
        dt = 0.05
        u = step_implicit(u_prev, dt, self.op, self.cfg)
        residual = np.abs(u + dt * self.op.A @ u ** 2 - u_prev).max()
        self.assertLessEqual(residual, 1e-9)
        self.assertTrue(np.all(u >= 0))
        self.assertGreater(u[self.grid.index_near(0.0)], 0.0)
        self.assertLess(u.max(), u_prev.max())

    def test_invalid_inputs(self):
        """Test negative data and nonpositive steps are rejected"""
        u = np.ones(self.grid.n)
        with self.assertRaises(DomainError):
            step_implicit(-u, 0.1, self.op, self.cfg)
        with self.assertRaises(DomainError):
            step_implicit(u, 0.0, self.op, self.cfg)

    def test_regularized_step(self):
        """Test delta > 0 solves the shifted equation"""
        cfg = replace(self.cfg, delta=0.1)
        u_prev = self.op.phi1.copy()
        u = step_implicit(u_prev, 0.1, self.op, cfg)
        flux = (u + 0.1) ** 2 - 0.01
        self.assertLessEqual(np.abs(u + 0.1 * self.op.A @ flux - u_prev).max(), 1e-9)

    def test_large_step_clip_within_tolerance(self):
        """Test a large step on a steep datum keeps the floor clip below newton_tol"""
        grid = build_grid(63)
        op = build_sfl(grid, 0.5)
        cfg = EvolutionConfig(m=3.0, dt0=5.0, growth=2.0, t_end=200.0)
        u0 = 4.0 * initial_datum("bump", grid, op)
        traj = evolve(u0, op, cfg)
        self.assertEqual(len(traj.clipped), len(traj.times) - 1)
        for k, clip in enumerate(traj.clipped):
            self.assertGreaterEqual(clip, 0.0)
            self.assertLessEqual(clip, cfg.newton_tol * traj.snapshots[k].max())
        self.assertTrue(np.all(traj.snapshots >= 0))
        self.assertLess(traj.final.max(), u0.max())


class TestSeparateVariables(unittest.TestCase):
    """Test evolution from the profile against the friendly giant"""

    @classmethod
    def setUpClass(cls):
        cls.grid = build_grid(64)
        cls.op = build_sfl(cls.grid, 0.5)
        cls.profile = solve_profile(compute_green(cls.op), 2.0)

    def _run(self, dt0):
        cfg = EvolutionConfig(m=2.0, dt0=dt0, growth=1.0, t_end=1.0)
        return evolve(self.profile.S, self.op, cfg)

    def _error(self, traj):
        exact = friendly_giant(self.profile, 1.0, traj.times[-1])
        return np.abs(traj.final - exact).max() / exact.max()

    def test_scalar_recursion(self):
        """Test u_k = a_k S with a_k + dt a_k^2 = a_k-1"""
        traj = self._run(1e-3)
        a = 1.0
        for dt in np.diff(traj.times):
            a = (-1.0 + np.sqrt(1.0 + 4.0 * dt * a)) / (2.0 * dt)
        np.testing.assert_allclose(traj.final, a * self.profile.S, rtol=1e-6)

    def test_friendly_giant_accuracy(self):
        """Test first-order agreement with (1+t)^(-1) S"""
        fine = self._error(self._run(1e-3))
        coarse = self._error(self._run(2e-3))
        self.assertLessEqual(fine, 1e-3)
        self.assertGreaterEqual(coarse / fine, 1.7)

    def test_time_rescaling(self):
        """Test evolving with cA equals evolving with A to c*t"""
        c = 2.0
        base = evolve(self.profile.S, self.op, EvolutionConfig(m=2.0, dt0=0.02, growth=1.0, t_end=1.0))
        fast = evolve(self.profile.S, self.op.scaled(c), EvolutionConfig(m=2.0, dt0=0.01, growth=1.0, t_end=0.5))
        np.testing.assert_allclose(fast.final, base.final, rtol=1e-8)


class TestPropagation(unittest.TestCase):
    """Test infinite speed of propagation from compactly supported data"""

    def test_positive_everywhere(self):
        """Test u(t_*/10) > 0 at every node, including dist < 0.01"""
        grid = build_grid(255)
        self.assertTrue(np.any(grid.dist < 0.01))
        for op in (build_rfl(grid, 0.3), build_sfl(grid, 0.5), build_cfl(grid, 0.75)):
            u0 = initial_datum("bump", grid, op)
            t_star = critical_time(u0, op.phi1, 2.0, 1.0, grid)
            traj = evolve(u0, op, EvolutionConfig(m=2.0, dt0=1e-3, growth=1.1, t_end=t_star / 10.0))
            self.assertTrue(np.all(traj.final > 0), op.kind.value)


class TestTrajectoryFiles(unittest.TestCase):
    """Test trajectory persistence"""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()
        grid = build_grid(16)
        op = build_sfl(grid, 0.5)
        cfg = EvolutionConfig(m=2.0, dt0=0.01, growth=1.2, t_end=0.5, probe_times=(0.1,))
        self.traj = evolve(initial_datum("c_phi1", grid, op), op, cfg)

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_save_and_load(self):
        """Test a saved trajectory loads back unchanged"""
        self.traj.save(self.temp_dir)
        loaded = Trajectory.load(self.temp_dir)
        np.testing.assert_array_equal(loaded.times, self.traj.times)
        np.testing.assert_array_equal(loaded.snapshots, self.traj.snapshots)
        np.testing.assert_array_equal(loaded.nodes, self.traj.nodes)
        self.assertEqual(loaded.config, self.traj.config)
        self.assertEqual(loaded.operator["kind"], "SFL")
        self.assertEqual(loaded.clipped, self.traj.clipped)

    def test_corrupted_snapshots(self):
        """Test a truncated or garbled snapshot table raises"""
        self.traj.save(self.temp_dir)
        path = Path(self.temp_dir) / "snapshots.csv"
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-3]) + "\n")
        with self.assertRaises(TrajectoryFormatError):
            Trajectory.load(self.temp_dir)
        path.write_text("t,x,u\nnot,a,number\n")
        with self.assertRaises(TrajectoryFormatError):
            Trajectory.load(self.temp_dir)

    def test_missing_metadata(self):
        """Test a directory without meta.json raises"""
        with self.assertRaises(TrajectoryFormatError):
            Trajectory.load(self.temp_dir)


class TestNormsAndLimits(unittest.TestCase):
    """Test weighted norms, the critical time and the delta limit"""

    @classmethod
    def setUpClass(cls):
        cls.grid = build_grid(32)
        cls.op = build_sfl(cls.grid, 0.5)

    def test_weighted_norm(self):
        """Test (h sum |u|^p Phi1)^(1/p)"""
        u = np.full(self.grid.n, 2.0)
        expected = (self.grid.h * np.sum(4.0 * self.op.phi1)) ** 0.5
        self.assertAlmostEqual(weighted_norm(u, self.op.phi1, 2.0, self.grid), expected)
        with self.assertRaises(DomainError):
            weighted_norm(u, self.op.phi1, 0.5, self.grid)

    def test_critical_time(self):
        """Test t_* = kappa * ||u0||^-(m-1) and the zero datum"""
        u0 = self.op.phi1
        mass = weighted_norm(u0, self.op.phi1, 1.0, self.grid)
        self.assertAlmostEqual(critical_time(u0, self.op.phi1, 3.0, 2.0, self.grid), 2.0 / mass ** 2)
        with self.assertRaises(DomainError):
            critical_time(np.zeros(self.grid.n), self.op.phi1, 2.0, 1.0, self.grid)

    def test_delta_limit(self):
        """Test regularized runs approach the delta = 0 run monotonically"""
        cfg = EvolutionConfig(m=2.0, dt0=0.01, growth=1.1, t_end=1.0)
        study = delta_limit_study(self.op.phi1, self.op, cfg, (1e-3, 1e-1, 1e-2))
        self.assertEqual(study.deltas, [1e-1, 1e-2, 1e-3])
        self.assertTrue(study.monotone)
        self.assertLess(study.distances[-1], study.distances[0])
        with self.assertRaises(ConfigError):
            delta_limit_study(self.op.phi1, self.op, cfg, (0.0,))


if __name__ == "__main__":
    unittest.main()
