#!/usr/bin/env python3
"""
Command-line experiment runner for the fractional porous-medium lab
Builds operators, solves profiles, evolves data, runs the estimate
checkers and reproduces the figure bundles
"""

import sys
import logging
import argparse
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

# Add the src directory to the path
sys.path.insert(0, str(Path(__file__).parent / "src"))

from settings_manager import CHECKERS, LOG_LEVELS, ExperimentSettings
from elliptic import boundary_exponent_fit, correction_exponents, solve_profile, verify_profile_bounds
from estimates import (EstimateReport, check_absolute_bound, check_asymptotics,
                       check_backward_weighted_mass, check_counterexample_upper, coarse_companion,
                       check_green_dissipation, check_ghp, check_kato_samples, check_local_harnack,
                       check_matching_lower, check_pointwise_estimates,
                       check_small_data_supersolution, check_time_monotonicity,
                       check_universal_lower, check_upper_boundary, check_weighted_lp_lower,
                       check_weighted_mass_decay, exponent_timeseries)
from evolution import EvolutionConfig, Trajectory, critical_time, evolve, initial_datum
from figures import reproduce_figure
from kernels import FAIL, PASS, SKIPPED, check_green_bounds, check_kernel_bounds, decompose_kernel
from operators import (DiscreteOperator, Grid, OperatorKind, build_grid, build_operator,
                       compute_green, sigma_of)
from utils import ConfigError, FitError, LabError, TrajectoryFormatError, write_csv, write_json

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.json"
# checkers that compare against the critical time
NEEDS_T_STAR = {"universal_lower", "matching_lower", "global_harnack", "local_harnack", "weighted_lp_lower"}


class ExperimentRunner:
    """One method per CLI command; every output directory receives the resolved config"""

    def __init__(self, settings: ExperimentSettings, out_dir: Path, fast: bool = False):
        problems = settings.errors + settings.validate_applicability()
        if problems:
            raise ConfigError("Invalid config: " + "; ".join(problems))
        if fast:
            settings.set("n", settings.get("fast_n"))
        self.settings = settings
        self.out_dir = Path(out_dir)

    def _export_config(self):
        if not self.settings.export_settings(self.out_dir / CONFIG_FILE):
            raise ConfigError(f"Could not write {self.out_dir / CONFIG_FILE}")

    def _operator(self) -> DiscreteOperator:
        grid = build_grid(self.settings.get("n"))
        return build_operator(OperatorKind.parse(self.settings.get("operator")), grid, self.settings.get("s"))

    @staticmethod
    def _fit_entry(v: np.ndarray, grid: Grid, expected: Optional[float],
                   corrections: Sequence[float] = ()) -> Dict[str, Any]:
        try:
            fit = boundary_exponent_fit(v, grid)
        except FitError as e:
            return {"expected": expected, "note": str(e)}
        entry = {"beta": fit.beta, "stderr": fit.stderr, "expected": expected}
        if corrections:
            try:
                corrected = boundary_exponent_fit(v, grid, corrections=corrections)
            except FitError as e:
                entry["note"] = f"corrected fit: {e}"
                return entry
            entry.update(beta_corrected=corrected.beta, stderr_corrected=corrected.stderr,
                         corrections=list(corrections))
        return entry

    def cmd_build_operator(self) -> int:
        """Assemble the operator, extract K and B, check kernel and Green bounds"""
        op = self._operator()
        grid = op.grid
        cap = self.settings.get("bound_cap")
        kd = decompose_kernel(op)
        kernel_report = check_kernel_bounds(kd, op, cap)
        green_report = check_green_bounds(compute_green(op), op, cap)

        fits = {"phi1": self._fit_entry(op.phi1, grid, op.gamma,
                                             correction_exponents(op.gamma, op.s, op.gamma))}
        if op.kind is OperatorKind.CFL:
            fits["B"] = {"expected": None, "note": "censored operator has no zero-order term",
                         "max_abs_B": float(np.max(np.abs(kd.B)))}
        else:
            fits["B"] = self._fit_entry(kd.B, grid, -2.0 * op.s)

        self._export_config()
        write_json(self.out_dir / "operator.json", op.to_dict())
        write_json(self.out_dir / "bounds.json", {
            "kernel": kernel_report.to_dict(),
            "green": green_report.to_dict(),
            "exponent_fits": fits,
        })
        print(f"✅ {op.kind.value} s={op.s} n={grid.n}: lambda1={op.lambda1:.6g}, "
              f"kernel bounds {kernel_report.verdict}, Green bounds {green_report.verdict}")
        return 0

    def cmd_solve_profile(self) -> int:
        """Solve L S^m = S and check its boundary behavior"""
        op = self._operator()
        m = self.settings.get("m")
        profile = solve_profile(compute_green(op), m, tol=self.settings.get("profile_tol"))
        report = verify_profile_bounds(profile, op, m, cap=self.settings.get("bound_cap"),
                                       trend_tol=self.settings.get("trend_tol"))
        sigma, critical = sigma_of(op.s, m, op.gamma)

        self._export_config()
        write_csv(self.out_dir / "profile.csv", ("x", "dist", "S", "phi1"), profile.to_rows(op.grid, op.phi1))
        write_json(self.out_dir / "profile_report.json", {
            "m": m,
            "sigma": sigma,
            "critical": critical,
            "iterations": profile.iterations,
            "residual": profile.residual,
            "gap": profile.gap,
            "exponent_fit": self._fit_entry(profile.S, op.grid, sigma / m * op.gamma,
                                            correction_exponents(sigma / m * op.gamma, op.s, op.gamma)),
            "bounds": report.to_dict(),
        })
        print(f"✅ Profile solved in {profile.iterations} iterations; bounds {report.verdict}")
        return 0

    def _evolution_config(self, t_end: float) -> EvolutionConfig:
        get = self.settings.get
        return EvolutionConfig(
            m=get("m"), delta=get("delta"), dt0=get("dt0"), growth=get("growth"), t_end=t_end,
            newton_tol=get("newton_tol"), newton_max=get("newton_max"), probe_times=tuple(get("probe_times")),
        )

    def cmd_evolve(self) -> int:
        """Evolve the configured datum and save the trajectory"""
        op = self._operator()
        m = self.settings.get("m")
        datum = self.settings.get("datum")
        profile = None
        if datum == "c_profile":
            profile = solve_profile(compute_green(op), m, tol=self.settings.get("profile_tol"))
        u0 = initial_datum(datum, op.grid, op, self.settings.get("datum_params"), profile)

        t_end = self.settings.get("t_end")
        if self.settings.get("t_end_tstar") is not None:
            t_star = critical_time(u0, op.phi1, m, self.settings.get("kappa_star"), op.grid)
            t_end = self.settings.get("t_end_tstar") * t_star
            logger.info(f"t_* = {t_star:.6g}; running to t_end = {t_end:.6g}")
        dropped = [t for t in self.settings.get("probe_times") if t > t_end]
        if dropped:
            logger.warning(f"Probe times beyond t_end ignored: {dropped}")

        traj = evolve(u0, op, self._evolution_config(t_end))
        self._export_config()
        traj.save(self.out_dir)
        print(f"✅ Trajectory with {len(traj.times)} snapshots written to {self.out_dir}")
        return 0

    def _trajectory_operator(self, traj: Trajectory) -> DiscreteOperator:
        try:
            kind, s = traj.operator["kind"], float(traj.operator["s"])
        except (KeyError, TypeError, ValueError) as e:
            raise TrajectoryFormatError(f"Trajectory has no operator provenance: {e}") from e
        grid = build_grid(len(traj.nodes))
        if not np.allclose(grid.nodes, traj.nodes, rtol=0.0, atol=1e-12):
            raise TrajectoryFormatError("Trajectory nodes do not match a uniform grid")
        return build_operator(kind, grid, s)

    def _checker_table(self, traj: Trajectory, op: DiscreteOperator,
                       t_star: Optional[float]) -> Dict[str, Callable[[], EstimateReport]]:
        get = self.settings.get
        m = traj.config.m
        green = compute_green(op)
        u0 = traj.snapshots[0]
        sigma, _ = sigma_of(op.s, m, op.gamma)
        power = 1.0 - 2.0 * op.s / op.gamma
        with np.errstate(divide="ignore", invalid="ignore"):
            C0 = float(np.max(u0 / op.phi1))
            A = float(np.max(u0 / op.phi1 ** power)) if sigma < 1 else 0.0

        def profile():
            return solve_profile(green, m, tol=get("profile_tol"))

        return {
            "time_monotonicity": lambda: check_time_monotonicity(traj, m),
            "green_dissipation": lambda: check_green_dissipation(traj, green),
            "pointwise_estimates": lambda: check_pointwise_estimates(traj, green, m),
            "absolute_bound": lambda: check_absolute_bound(traj, m),
            "upper_boundary": lambda: check_upper_boundary(traj, op, m, coarse_companion(traj, op),
                                                           get("trend_tol")),
            "universal_lower": lambda: check_universal_lower(traj, op, m, t_star),
            "matching_lower": lambda: check_matching_lower(traj, op, m, t_star, get("trend_tol")),
            "counterexample_upper": lambda: check_counterexample_upper(traj, op, m, max(C0, 1e-300)),
            "small_data_supersolution": lambda: check_small_data_supersolution(traj, op, m, max(A, 1e-300)),
            "backward_weighted_mass": lambda: check_backward_weighted_mass(traj, op.phi1, m),
            "kato": lambda: check_kato_samples(op, m, get("seed")),
            "global_harnack": lambda: check_ghp(traj, op, m, t_star, get("trend_tol")),
            "local_harnack": lambda: check_local_harnack(traj, op, t_star, tuple(get("harnack_ball")), m),
            "asymptotics": lambda: check_asymptotics(traj, profile(), m),
            "weighted_mass_decay": lambda: check_weighted_mass_decay(traj, op),
            "weighted_lp_lower": lambda: check_weighted_lp_lower(traj, op, t_star),
        }

    def cmd_analyze(self, trajectory_dir: Path) -> int:
        """Run the selected checkers on a saved trajectory"""
        traj = Trajectory.load(trajectory_dir)
        op = self._trajectory_operator(traj)
        m = traj.config.m

        t_star = None
        if not traj.is_trivial:
            t_star = critical_time(traj.snapshots[0], op.phi1, m, self.settings.get("kappa_star"), op.grid)
        selected = CHECKERS if self.settings.get("checkers") == "all" else self.settings.get("checkers")
        table = self._checker_table(traj, op, t_star)

        reports: List[EstimateReport] = []
        for name in selected:
            if t_star is None and name in NEEDS_T_STAR:
                reports.append(EstimateReport(theorem=name, verdict=SKIPPED,
                                              notes=["critical time undefined for a zero datum"]))
                continue
            reports.append(table[name]())

        series_notes = []
        try:
            series = exponent_timeseries(traj, op.grid, m)
            write_csv(self.out_dir / "exponent_series.csv", ("t", "beta", "stderr"), series.to_rows())
        except FitError as e:
            series_notes.append(f"exponent series not fitted: {e}")
            logger.warning(series_notes[-1])

        verdict = FAIL if any(r.failed for r in reports) else PASS
        self._export_config()
        write_json(self.out_dir / "analysis.json", {
            "trajectory": str(trajectory_dir),
            "operator": traj.operator,
            "m": m,
            "t_star": t_star,
            "verdict": verdict,
            "notes": series_notes,
            "reports": [r.to_dict() for r in reports],
        })
        counts = {v: sum(r.verdict == v for r in reports) for v in (PASS, FAIL, SKIPPED)}
        print(f"{'✅' if verdict == PASS else '❌'} Analysis {verdict}: "
              f"{counts[PASS]} pass, {counts[FAIL]} fail, {counts[SKIPPED]} skipped")
        return 0 if verdict == PASS else 3

    def cmd_reproduce_figure(self, which: int) -> int:
        """Write the CSV bundle and claim verdicts of one figure"""
        get = self.settings.get
        schedule = {"dt0": get("dt0"), "growth": get("growth"), "kappa_star": get("kappa_star")}
        summary = reproduce_figure(which, get("n"), self.out_dir, schedule=schedule)
        self._export_config()
        print(f"{'✅' if summary['verdict'] == PASS else '❌'} Figure {which}: {summary['verdict']}")
        return 0 if summary["verdict"] == PASS else 3


def build_parser() -> argparse.ArgumentParser:
    """Argument parser for the fpme program"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON settings file (plain or exported)")
    common.add_argument("--out", default="results", help="output directory")
    common.add_argument("--fast", action="store_true", help="use the fast_n grid size")
    common.add_argument("--log-level", choices=LOG_LEVELS, help="overrides the log_level setting")
    common.add_argument("--no-log-file", action="store_true", help="log to the console only")

    parser = argparse.ArgumentParser(prog="fpme", description="Fractional porous-medium numerical lab")
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("build-operator", parents=[common], help="assemble an operator and check its kernel")
    commands.add_parser("solve-profile", parents=[common], help="solve the stationary profile")
    commands.add_parser("evolve", parents=[common], help="evolve the configured datum")
    analyze = commands.add_parser("analyze", parents=[common], help="run estimate checkers on a trajectory")
    analyze.add_argument("--trajectory", required=True, help="directory written by evolve")
    figure = commands.add_parser("reproduce-figure", parents=[common], help="write a figure data bundle")
    figure.add_argument("which", type=int, help="figure number (1, 2 or 3)")
    return parser


def run_command(args: argparse.Namespace, settings: ExperimentSettings) -> int:
    """Dispatch one parsed command; library errors become exit codes 1/2/3"""
    try:
        runner = ExperimentRunner(settings, Path(args.out), fast=args.fast)
        if args.command == "build-operator":
            return runner.cmd_build_operator()
        if args.command == "solve-profile":
            return runner.cmd_solve_profile()
        if args.command == "evolve":
            return runner.cmd_evolve()
        if args.command == "analyze":
            return runner.cmd_analyze(Path(args.trajectory))
        return runner.cmd_reproduce_figure(args.which)
    except LabError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"❌ {e}")
        return e.exit_code


def parse_args(argv: Optional[Sequence[str]] = None) -> Optional[argparse.Namespace]:
    """Parse argv; None when argparse rejects it (usage already printed)"""
    try:
        return build_parser().parse_args(argv)
    except SystemExit as e:
        if e.code in (0, None):
            raise
        return None
