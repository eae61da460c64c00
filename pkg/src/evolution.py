#!/usr/bin/env python3
"""
Implicit time stepping for the fractional porous-medium equation

Backward Euler with a safeguarded Newton solve for u_t + A((u+delta)^m - delta^m) = 0
on a geometric time schedule, preset initial data, trajectory persistence
and L^p_Phi1 utilities.

Author: fpme-lab developers
License: MIT
"""

import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy import linalg

from elliptic import Profile
from operators import DiscreteOperator, Grid
from utils import (ConfigError, DomainError, StepError, TrajectoryFormatError,
                   read_json, write_csv, write_json)

logger = logging.getLogger(__name__)

DATUM_PRESETS = ("bump", "c_phi1", "c_phi1_pow", "c_profile", "constant")
LINE_SEARCH_HALVINGS = 30
# a step may land on a probe time early if the leftover would be tiny
MERGE_FRACTION = 0.25

META_FILE = "meta.json"
SNAPSHOT_FILE = "snapshots.csv"


@dataclass(frozen=True)
class EvolutionConfig:
    """Time-stepping parameters; validated on construction."""

    m: float
    delta: float = 0.0
    dt0: float = 1e-3
    growth: float = 1.05
    t_end: float = 10.0
    newton_tol: float = 1e-10
    newton_max: int = 50
    probe_times: tuple = ()
    max_halvings: int = 5

    def __post_init__(self):
        object.__setattr__(self, "probe_times", tuple(float(t) for t in self.probe_times))
        problems = []
        if not self.m > 1:
            problems.append(f"m must be > 1 (got {self.m})")
        if self.delta < 0:
            problems.append(f"delta must be >= 0 (got {self.delta})")
        if not self.dt0 > 0:
            problems.append(f"dt0 must be > 0 (got {self.dt0})")
        if not self.growth >= 1:
            problems.append(f"growth must be >= 1 (got {self.growth})")
        if not self.t_end > 0:
            problems.append(f"t_end must be > 0 (got {self.t_end})")
        if not self.newton_tol > 0:
            problems.append(f"newton_tol must be > 0 (got {self.newton_tol})")
        if self.newton_max < 1:
            problems.append(f"newton_max must be >= 1 (got {self.newton_max})")
        if any(t <= 0 for t in self.probe_times):
            problems.append("probe times must be positive")
        if problems:
            raise ConfigError("Invalid evolution config: " + "; ".join(problems))

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["probe_times"] = list(self.probe_times)
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EvolutionConfig":
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        try:
            return cls(**known)
        except TypeError as e:
            raise ConfigError(f"Invalid evolution config: {e}") from e


class StepResult(NamedTuple):
    u: np.ndarray
    iterations: int
    halvings: int
    clipped: float = 0.0  # l-inf amount removed by the floor at 0 on the accepted iterate


@dataclass
class Trajectory:
    """Snapshots u(t_k) on the grid with solver diagnostics."""

    times: np.ndarray
    snapshots: np.ndarray = field(repr=False)
    nodes: np.ndarray = field(repr=False)
    config: EvolutionConfig
    newton_iterations: List[int] = field(default_factory=list)
    operator: Dict[str, Any] = field(default_factory=dict)
    clipped: List[float] = field(default_factory=list)

    @property
    def final(self) -> np.ndarray:
        return self.snapshots[-1]

    @property
    def is_trivial(self) -> bool:
        return not np.any(self.snapshots > 0)

    def index_of(self, t: float) -> int:
        """Index of the snapshot closest to time t."""
        return int(np.argmin(np.abs(self.times - t)))

    def with_snapshots(self, snapshots: np.ndarray) -> "Trajectory":
        """Same times and provenance, different data (used for controls and rescaling)."""
        return replace(self, snapshots=np.asarray(snapshots, dtype=float))

    def save(self, directory: Union[str, Path]):
        """
        Write meta.json and snapshots.csv (columns t, x, u) into directory.

        Args:
            directory: Output directory, created if missing.
        """
        directory = Path(directory)
        meta = {
            "config": self.config.to_dict(),
            "operator": self.operator,
            "n": len(self.nodes),
            "times": self.times,
            "newton_iterations": self.newton_iterations,
            "clipped": self.clipped,
        }
        write_json(directory / META_FILE, meta)
        rows = (
            (t, x, u)
            for t, snapshot in zip(self.times, self.snapshots)
            for x, u in zip(self.nodes, snapshot)
        )
        write_csv(directory / SNAPSHOT_FILE, ("t", "x", "u"), rows)

    @classmethod
    def load(cls, directory: Union[str, Path]) -> "Trajectory":
        """
        Read a trajectory written by save().

        Raises:
            TrajectoryFormatError: missing files, bad JSON or inconsistent snapshot table.
        """
        directory = Path(directory)
        meta = read_json(directory / META_FILE)
        try:
            times = np.asarray(meta["times"], dtype=float)
            n = int(meta["n"])
            config = EvolutionConfig.from_dict(meta["config"])
        except (KeyError, TypeError, ValueError, ConfigError) as e:
            raise TrajectoryFormatError(f"Malformed {directory / META_FILE}: {e}") from e

        path = directory / SNAPSHOT_FILE
        try:
            table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        except (OSError, ValueError) as e:
            raise TrajectoryFormatError(f"Cannot parse {path}: {e}") from e
        if table.shape != (len(times) * n, 3):
            raise TrajectoryFormatError(
                f"{path} has shape {table.shape}, expected ({len(times) * n}, 3)"
            )
        snapshots = table[:, 2].reshape(len(times), n)
        if not np.array_equal(table[:, 0].reshape(len(times), n)[:, 0], times):
            raise TrajectoryFormatError(f"{path} times do not match {META_FILE}")
        return cls(
            times=times,
            snapshots=snapshots,
            nodes=table[:n, 1].copy(),
            config=config,
            newton_iterations=list(meta.get("newton_iterations", [])),
            operator=dict(meta.get("operator", {})),
            clipped=[float(c) for c in meta.get("clipped", [])],
        )


def time_schedule(cfg: EvolutionConfig) -> np.ndarray:
    """
    Geometric step times from 0 to t_end that land exactly on every probe time.

    The nominal dt grows by cfg.growth each step; a step that would leave
    less than a quarter of dt before the next target goes to the target.
    """
    targets = sorted({t for t in cfg.probe_times if t < cfg.t_end}) + [cfg.t_end]
    times = [0.0]
    t, dt = 0.0, cfg.dt0
    for target in targets:
        while t < target:
            t = target if target - t <= (1.0 + MERGE_FRACTION) * dt else t + dt
            times.append(t)
            dt *= cfg.growth
    return np.asarray(times)


def initial_datum(preset: str, grid: Grid, op: DiscreteOperator,
                  params: Optional[Mapping[str, float]] = None,
                  profile: Optional[Profile] = None) -> np.ndarray:
    """
    Build a nonnegative initial datum on the grid.

    Presets:
        bump: c * exp(4 - 1/(1/4 - x^2)) on |x| < 1/2, peak c at x = 0.
        c_phi1: c * Phi1.
        c_phi1_pow: c * Phi1^p.
        c_profile: c * S (needs profile).
        constant: c.
    """
    params = dict(params or {})
    c = float(params.get("c", 1.0))
    if c < 0:
        raise ConfigError(f"Datum amplitude c must be >= 0, got {c}")
    x = grid.nodes

    if preset == "bump":
        u0 = np.zeros(grid.n)
        inside = np.abs(x) < 0.5
        u0[inside] = np.exp(4.0 - 1.0 / (0.25 - x[inside] ** 2))
    elif preset == "c_phi1":
        u0 = op.phi1.copy()
    elif preset == "c_phi1_pow":
        if "p" not in params:
            raise ConfigError("Datum preset c_phi1_pow needs parameter p")
        u0 = op.phi1 ** float(params["p"])
    elif preset == "c_profile":
        if profile is None:
            raise ConfigError("Datum preset c_profile needs a solved profile")
        u0 = profile.S.copy()
    elif preset == "constant":
        u0 = np.ones(grid.n)
    else:
        raise ConfigError(f"Unknown datum preset {preset!r} (expected one of {', '.join(DATUM_PRESETS)})")
    return c * u0


def _newton(u_prev: np.ndarray, dt: float, A: np.ndarray, cfg: EvolutionConfig,
            a_norm: float) -> Optional[StepResult]:
    """
    Solve u + dt A((u+delta)^m - delta^m) = u_prev; None on failure.

    Iterates are projected onto u >= 0. An iterate counts as converged only
    if that projection removed at most newton_tol * ||u_prev||_inf.
    """
    m, delta = cfg.m, cfg.delta
    base = delta ** m
    scale = float(np.max(np.abs(u_prev)))
    clip_tol = cfg.newton_tol * scale
    eye = np.eye(len(u_prev))

    def residual(u):
        flux = (u + delta) ** m - base
        return u + dt * (A @ flux) - u_prev, flux

    u = u_prev.copy()
    F, flux = residual(u)
    fnorm = float(np.max(np.abs(F)))
    clipped = 0.0
    for it in range(cfg.newton_max + 1):
        # rounding floor of evaluating dt*A*flux
        floor = 64.0 * np.finfo(float).eps * (scale + dt * a_norm * float(np.max(np.abs(flux))))
        threshold = max(cfg.newton_tol * scale, floor)
        converged = fnorm <= threshold
        if converged and clipped <= clip_tol:
            return StepResult(u, it, 0, clipped)
        if it == cfg.newton_max:
            break
        if converged:
            logger.warning(f"Newton residual {fnorm:.3e} reached with {clipped:.3e} clipped "
                           f"(tolerance {clip_tol:.3e}); refining")

        J = eye + dt * A * (m * (u + delta) ** (m - 1.0))[None, :]
        try:
            du = linalg.solve(J, -F)
        except linalg.LinAlgError as e:
            logger.debug(f"Newton Jacobian solve failed: {e}")
            return None

        lam = 1.0
        for _ in range(LINE_SEARCH_HALVINGS):
            raw = u + lam * du
            trial = np.maximum(raw, 0.0)
            F_trial, flux_trial = residual(trial)
            f_trial = float(np.max(np.abs(F_trial)))
            if f_trial < fnorm or (converged and f_trial <= threshold):
                break
            lam *= 0.5
        else:
            logger.debug(f"Line search failed at Newton step {it + 1}, residual {fnorm:.3e}")
            return None

        clipped = max(float(-raw.min()), 0.0)
        if clipped > 0:
            logger.debug(f"Newton floor clipped {clipped:.3e} at step {it + 1}")
        step = float(np.max(np.abs(trial - u)))
        u, F, flux, fnorm = trial, F_trial, flux_trial, f_trial
        logger.debug(f"Newton step {it + 1}: residual {fnorm:.3e}, step {step:.3e}")
        if step <= clip_tol and clipped <= clip_tol:
            return StepResult(u, it + 1, 0, clipped)
    if clipped > clip_tol:
        logger.warning(f"Newton stopped with {clipped:.3e} clipped at the floor (tolerance {clip_tol:.3e})")
    logger.debug(f"Newton did not converge in {cfg.newton_max} steps (residual {fnorm:.3e})")
    return None


def _advance(u_prev: np.ndarray, dt: float, op: DiscreteOperator, cfg: EvolutionConfig,
             a_norm: float, depth: int = 0) -> StepResult:
    """One step of size dt, split into halves recursively when Newton fails."""
    result = _newton(u_prev, dt, op.A, cfg, a_norm)
    if result is not None:
        return result
    if depth >= cfg.max_halvings:
        raise StepError(f"Newton failed for dt={dt:.3e} after {cfg.max_halvings} halvings")
    logger.warning(f"Newton failed at dt={dt:.3e}; retrying with two half steps")
    first = _advance(u_prev, dt / 2, op, cfg, a_norm, depth + 1)
    second = _advance(first.u, dt / 2, op, cfg, a_norm, depth + 1)
    return StepResult(second.u, first.iterations + second.iterations,
                      1 + first.halvings + second.halvings, max(first.clipped, second.clipped))


def step_implicit(u_prev: np.ndarray, dt: float, op: DiscreteOperator,
                  cfg: EvolutionConfig) -> np.ndarray:
    """
    One backward-Euler step: solve u + dt A((u+delta)^m - delta^m) = u_prev.

    Raises:
        DomainError: u_prev has negative entries or dt <= 0.
        StepError: Newton failed after all dt halvings.
    """
    return _step(u_prev, dt, op, cfg).u


def _step(u_prev: np.ndarray, dt: float, op: DiscreteOperator, cfg: EvolutionConfig,
          a_norm: Optional[float] = None) -> StepResult:
    u_prev = np.asarray(u_prev, dtype=float)
    if dt <= 0:
        raise DomainError(f"Time step must be positive, got {dt}")
    if np.any(u_prev < 0):
        raise DomainError(f"Implicit step needs u_prev >= 0 (min {u_prev.min():.3e})")
    if not np.any(u_prev > 0):
        return StepResult(np.zeros_like(u_prev), 0, 0)
    if a_norm is None:
        a_norm = float(np.abs(op.A).sum(axis=1).max())
    return _advance(u_prev, dt, op, cfg, a_norm)


def evolve(u0: np.ndarray, op: DiscreteOperator, cfg: EvolutionConfig) -> Trajectory:
    """
    Integrate from u0 over the geometric schedule of cfg.

    Args:
        u0: Nonnegative initial datum.
        op: Operator.
        cfg: Time-stepping configuration.

    Returns:
        Trajectory with one snapshot per step, probe times included exactly.
    """
    u = np.asarray(u0, dtype=float).copy()
    if u.shape != (op.grid.n,):
        raise DomainError(f"Initial datum has shape {u.shape}, grid has {op.grid.n} nodes")
    if np.any(u < 0):
        raise DomainError("Initial datum must be nonnegative")

    times = time_schedule(cfg)
    a_norm = float(np.abs(op.A).sum(axis=1).max())
    snapshots = [u.copy()]
    iterations = []
    clipped = []
    halvings = 0
    for t_prev, t_next in zip(times[:-1], times[1:]):
        result = _step(u, t_next - t_prev, op, cfg, a_norm)
        u = result.u
        snapshots.append(u.copy())
        iterations.append(result.iterations)
        clipped.append(result.clipped)
        halvings += result.halvings

    logger.info(
        f"Evolved {op.kind.value} s={op.s} m={cfg.m} to t={times[-1]:g}: {len(times) - 1} steps, "
        f"{sum(iterations)} Newton iterations, {halvings} dt halvings, max clip {max(clipped, default=0.0):.2e}"
    )
    return Trajectory(
        times=times,
        snapshots=np.asarray(snapshots),
        nodes=np.asarray(op.grid.nodes).copy(),
        config=cfg,
        newton_iterations=iterations,
        clipped=clipped,
        operator={k: v for k, v in op.to_dict().items() if k not in ("nodes", "phi1")},
    )


def weighted_norm(u: np.ndarray, phi1: np.ndarray, p: float, grid: Grid) -> float:
    """(h * sum |u|^p Phi1)^(1/p); the trapezoid rule with zero boundary values."""
    if p < 1:
        raise DomainError(f"Weighted norm needs p >= 1, got {p}")
    return float((grid.h * np.sum(np.abs(u) ** p * phi1)) ** (1.0 / p))


def critical_time(u0: np.ndarray, phi1: np.ndarray, m: float, kappa_star: float,
                  grid: Grid) -> float:
    """t_* = kappa_* ||u0||_{L^1_Phi1}^(-(m-1))."""
    mass = weighted_norm(u0, phi1, 1.0, grid)
    if mass == 0:
        raise DomainError("Critical time undefined for a zero datum")
    return kappa_star * mass ** (-(m - 1.0))


@dataclass(frozen=True)
class DeltaLimitStudy:
    deltas: List[float]
    distances: List[float]
    monotone: bool

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def delta_limit_study(u0: np.ndarray, op: DiscreteOperator, cfg: EvolutionConfig,
                      deltas: Sequence[float]) -> DeltaLimitStudy:
    """
    Distance at t_end between regularized runs and the delta = 0 run.

    Distances are expected to shrink as delta decreases.
    """
    ordered = sorted((float(d) for d in deltas), reverse=True)
    if not ordered or ordered[-1] <= 0:
        raise ConfigError("delta_limit_study needs positive deltas")
    reference = evolve(u0, op, replace(cfg, delta=0.0)).final
    distances = []
    for delta in ordered:
        final = evolve(u0, op, replace(cfg, delta=delta)).final
        distances.append(float(np.max(np.abs(final - reference))))
        logger.info(f"delta={delta:g}: sup distance to delta=0 run {distances[-1]:.3e}")
    monotone = all(b <= a * (1.0 + 1e-9) for a, b in zip(distances, distances[1:]))
    return DeltaLimitStudy(deltas=ordered, distances=distances, monotone=monotone)
