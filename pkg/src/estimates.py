#!/usr/bin/env python3
"""
Estimate checkers for porous-medium trajectories

Each checker evaluates one quantitative bound on a trajectory (decay
rates, boundary comparators, Harnack-type inequalities, asymptotics) and
returns an EstimateReport with the fitted constants. A failed inequality
is a verdict, never an exception.

Author: fpme-lab developers
License: MIT
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from elliptic import Profile, boundary_comparator, boundary_exponent_fit, correction_exponents
from evolution import Trajectory, evolve
from kernels import FAIL, PASS, SKIPPED
from operators import (DiscreteOperator, GreenMatrix, Grid, OperatorKind, build_grid,
                       build_operator, sigma_of)
from utils import FitError, PreconditionError

logger = logging.getLogger(__name__)

MONOTONICITY_TOL = 1e-6
DISSIPATION_TOL = 1e-9
POINTWISE_TOL = 1e-6
KATO_TOL = 1e-10
KATO_SAMPLES = 50
KATO_RANGE = (0.1, 1.0)
SLOPE_TOL = 0.03
EXPONENT_TOL = 0.05
TREND_TOL = 0.15
ASYMPTOTIC_TOL = 0.01
MAX_PAIR_SNAPSHOTS = 200
DEFAULT_PROBE_COUNT = 12


@dataclass
class EstimateReport:
    """Verdict of one checker with its fitted constants."""

    theorem: str
    verdict: str = SKIPPED
    constants: Dict[str, Any] = field(default_factory=dict)
    worst_node: Optional[int] = None
    worst_time: Optional[float] = None
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    @property
    def failed(self) -> bool:
        return self.verdict == FAIL

    def to_dict(self) -> Dict[str, Any]:
        return {
            "theorem": self.theorem,
            "verdict": self.verdict,
            "constants": dict(self.constants),
            "worst_node": self.worst_node,
            "worst_time": self.worst_time,
            "notes": list(self.notes),
        }


@dataclass(frozen=True)
class ExponentSeries:
    times: np.ndarray
    beta: np.ndarray
    stderr: np.ndarray
    window: Tuple[float, float]

    def to_rows(self) -> List[Tuple[float, float, float]]:
        return list(zip(self.times, self.beta, self.stderr))

    def beta_at(self, t: float) -> float:
        return float(self.beta[int(np.argmin(np.abs(self.times - t)))])


def _skipped(theorem: str, reason: str) -> EstimateReport:
    logger.info(f"{theorem}: skipped ({reason})")
    return EstimateReport(theorem=theorem, verdict=SKIPPED, notes=[reason])


def _finish(report: EstimateReport, ok: bool) -> EstimateReport:
    report.verdict = PASS if ok else FAIL
    log = logger.info if ok else logger.warning
    log(f"{report.theorem}: {report.verdict} {report.constants}")
    return report


def _alpha(m: float) -> float:
    return 1.0 / (m - 1.0)


def _positive(traj: Trajectory) -> Tuple[np.ndarray, np.ndarray]:
    mask = traj.times > 0
    return traj.times[mask], traj.snapshots[mask]


def _worst(values: np.ndarray, times: np.ndarray, largest: bool = True) -> Tuple[int, float]:
    flat = int(np.argmax(values) if largest else np.argmin(values))
    k, i = np.unravel_index(flat, values.shape)
    return int(i), float(times[k])


def _subsample(count: int, limit: int) -> np.ndarray:
    if count <= limit:
        return np.arange(count)
    return np.unique(np.linspace(0, count - 1, limit).round().astype(int))


def _default_probe_times(times: np.ndarray, count: int = DEFAULT_PROBE_COUNT) -> np.ndarray:
    positive = times[times > 0]
    if positive.size == 0:
        return positive
    targets = np.geomspace(positive[0], positive[-1], count)
    idx = np.unique([int(np.argmin(np.abs(positive - t))) for t in targets])
    return positive[idx]


def _fit_or_none(v: np.ndarray, grid: Grid, notes: List[str], label: str) -> Optional[float]:
    try:
        return boundary_exponent_fit(v, grid).beta
    except FitError as e:
        notes.append(f"{label}: {e}")
        return None


def _phi_exponent(v: np.ndarray, op: DiscreteOperator, notes: List[str], label: str) -> Optional[float]:
    """Boundary exponent of v measured in powers of Phi1."""
    beta = _fit_or_none(v, op.grid, notes, label)
    phi_beta = _fit_or_none(op.phi1, op.grid, notes, "phi1")
    if beta is None or phi_beta is None:
        return None
    return beta / phi_beta


def green_probe_nodes(grid: Grid) -> np.ndarray:
    """Nodes nearest to the points at distance 0.1, 0.2, ..., 0.9 from x = -1."""
    return np.unique([grid.index_near(-1.0 + d / 10.0) for d in range(1, 10)])


def check_time_monotonicity(traj: Trajectory, m: float, tol: float = MONOTONICITY_TOL) -> EstimateReport:
    """
    t -> t^(1/(m-1)) u(t, x) must be nondecreasing at every node.

    The weight is taken along the scheme's own separable solution,
    t^(1/(m-1)) c / q(t) with q from _separable_factor and c its limit, so
    that a change of step ratio (such as a short final step) does not read
    as a decrease.
    """
    theorem = "time_monotonicity"
    times, snaps = _positive(traj)
    if len(times) < 2:
        return _skipped(theorem, "fewer than 2 positive-time snapshots")
    a = _alpha(m)
    weight = times ** a * (m - 1.0) ** (-a) / _separable_factor(times, m)
    w = weight[:, None] * snaps
    drop = np.maximum.accumulate(w, axis=0) - w
    scale = float(np.max(np.abs(w)))
    report = EstimateReport(theorem=theorem)
    report.constants["max_decrease"] = float(drop.max())
    report.constants["relative_decrease"] = float(drop.max() / scale) if scale > 0 else 0.0
    report.worst_node, report.worst_time = _worst(drop, times)
    return _finish(report, drop.max() <= tol * scale)


def check_green_dissipation(traj: Trajectory, green: GreenMatrix, tol: float = DISSIPATION_TOL) -> EstimateReport:
    """(G u(t))(x0) must be nonincreasing in t at every probe node x0."""
    theorem = "green_dissipation"
    probes = green_probe_nodes(green.op.grid)
    values = traj.snapshots @ green.G[probes].T
    rise = values - np.minimum.accumulate(values, axis=0)
    scale = float(np.max(np.abs(values)))
    report = EstimateReport(theorem=theorem)
    report.constants["max_increase"] = float(rise.max())
    k, p = np.unravel_index(int(np.argmax(rise)), rise.shape)
    report.worst_node, report.worst_time = int(probes[p]), float(traj.times[k])
    return _finish(report, rise.max() <= tol * scale)


def check_pointwise_estimates(traj: Trajectory, green: GreenMatrix, m: float,
                              tol: float = POINTWISE_TOL,
                              max_snapshots: int = MAX_PAIR_SNAPSHOTS) -> EstimateReport:
    """
    Two-sided bound on the Green-weighted loss between t0 <= t1 <= t:

        (t0/t1)^(m/(m-1)) (t1-t0) u^m(t0) <= G[u(t0) - u(t1)] <= (m-1) t^(m/(m-1)) t0^(-1/(m-1)) u^m(t)

    at every probe node. For the upper side the best t >= t1 is used.
    """
    theorem = "pointwise_estimates"
    times, snaps = _positive(traj)
    if len(times) < 3:
        return _skipped(theorem, "fewer than 3 positive-time snapshots")
    idx = _subsample(len(times), max_snapshots)
    t, U = times[idx], snaps[idx]
    probes = green_probe_nodes(green.op.grid)
    a = _alpha(m)

    V = U @ green.G[probes].T
    P = U[:, probes] ** m
    D = V[:, None, :] - V[None, :, :]
    ordered = np.triu(np.ones((len(t), len(t)), dtype=bool))[:, :, None]

    lower = (t[:, None] / t[None, :]) ** (a * m) * (t[None, :] - t[:, None])
    lower = lower[:, :, None] * P[:, None, :]
    best_upper = np.minimum.accumulate((t[:, None] ** (a * m) * P)[::-1], axis=0)[::-1]
    upper = (m - 1.0) * t[:, None, None] ** (-a) * best_upper[None, :, :]

    lower_violation = np.where(ordered, lower - D, -np.inf)
    upper_violation = np.where(ordered, D - upper, -np.inf)
    scale = float(np.max(np.abs(V)))

    report = EstimateReport(theorem=theorem)
    report.constants["lower_violation"] = float(lower_violation.max())
    report.constants["upper_violation"] = float(upper_violation.max())
    report.constants["snapshots_used"] = int(len(t))
    worst = upper_violation if upper_violation.max() > lower_violation.max() else lower_violation
    i, _, p = np.unravel_index(int(np.argmax(worst)), worst.shape)
    report.worst_node, report.worst_time = int(probes[p]), float(t[i])
    ok = max(lower_violation.max(), upper_violation.max()) <= tol * scale
    return _finish(report, ok)


def check_absolute_bound(traj: Trajectory, m: float, slope_tol: float = SLOPE_TOL) -> EstimateReport:
    """
    K1 = sup_t ||u(t)||_inf t^(1/(m-1)) and the decay slope over the last decade.

    The slope must equal -1/(m-1) within slope_tol (relative).
    """
    theorem = "absolute_bound"
    if traj.is_trivial:
        return _skipped(theorem, "trivial trajectory")
    times, snaps = _positive(traj)
    a = _alpha(m)
    norms = snaps.max(axis=1)
    scaled = norms * times ** a
    report = EstimateReport(theorem=theorem)
    report.constants["K1"] = float(scaled.max())
    report.worst_time = float(times[int(np.argmax(scaled))])

    window = times >= times[-1] / 10.0
    slope_ok = True
    if window.sum() >= 3 and np.all(norms[window] > 0):
        slope = stats.linregress(np.log(times[window]), np.log(norms[window])).slope
        report.constants["decay_slope"] = float(slope)
        report.constants["expected_slope"] = -a
        slope_ok = abs(slope + a) <= slope_tol * a
    else:
        report.notes.append("fewer than 3 snapshots in the last decade; slope not fitted")
    return _finish(report, bool(np.isfinite(scaled.max())) and slope_ok)


def check_upper_boundary(traj: Trajectory, op: DiscreteOperator, m: float,
                         companion: Optional[Tuple[Trajectory, DiscreteOperator]] = None,
                         trend_tol: float = TREND_TOL) -> EstimateReport:
    """
    k1 = sup u t^(1/(m-1)) / comparator, with the sharp boundary comparator.

    A single grid always gives a finite k1, so the verdict rests on two
    conditions: the final ratio may not grow towards the boundary faster
    than dist^-trend_tol, and when a companion run on another grid is given
    the two k1 values must agree within trend_tol (relative).
    """
    theorem = "upper_boundary"
    if traj.is_trivial:
        return _skipped(theorem, "trivial trajectory")
    sigma, critical = sigma_of(op.s, m, op.gamma)
    report = EstimateReport(theorem=theorem)
    ratio, times = _comparator_ratio(traj, op, m, sigma, critical)
    k1 = float(ratio.max())
    report.constants.update(k1=k1, sigma=sigma, critical=critical)
    report.worst_node, report.worst_time = _worst(ratio, times)
    ok = bool(np.isfinite(k1))

    trend = _fit_or_none(ratio[-1], op.grid, report.notes, "final ratio trend")
    if trend is not None:
        report.constants["final_ratio_trend"] = trend
        if trend < -trend_tol:
            report.notes.append(f"final ratio grows towards the boundary like dist^{trend:.3f}")
            ok = False

    if companion is None:
        report.notes.append("k1 is a single-grid surrogate; no companion grid given")
        return _finish(report, ok)
    other, other_op = companion
    if other.is_trivial:
        report.notes.append("companion trajectory is trivial; k1 stability not checked")
        return _finish(report, ok)
    k1_other = float(_comparator_ratio(other, other_op, m, sigma, critical)[0].max())
    drift = max(k1, k1_other) / min(k1, k1_other) - 1.0
    report.constants.update(k1_companion=k1_other, companion_n=other_op.grid.n, k1_drift=drift)
    if drift > trend_tol:
        report.notes.append(f"k1 moves by {drift:.1%} between n={op.grid.n} and n={other_op.grid.n}")
        ok = False
    return _finish(report, ok)


def _comparator_ratio(traj: Trajectory, op: DiscreteOperator, m: float, sigma: float,
                      critical: bool) -> Tuple[np.ndarray, np.ndarray]:
    comparator = boundary_comparator(op.phi1, m, sigma, critical)
    times, snaps = _positive(traj)
    return times[:, None] ** _alpha(m) * snaps / comparator, times


def coarse_companion(traj: Trajectory, op: DiscreteOperator,
                     min_nodes: int = 16) -> Optional[Tuple[Trajectory, DiscreteOperator]]:
    """
    Rerun traj on the grid with n // 2 nodes, same operator and schedule.

    The initial datum is interpolated linearly; None when the coarse grid
    would have fewer than min_nodes nodes.
    """
    n = op.grid.n // 2
    if n < min_nodes:
        return None
    coarse = build_operator(op.kind, build_grid(n), op.s)
    u0 = np.maximum(np.interp(coarse.grid.nodes, op.grid.nodes, traj.snapshots[0]), 0.0)
    logger.info(f"Companion run on n={n} for the k1 refinement check")
    return evolve(u0, coarse, traj.config), coarse


def check_universal_lower(traj: Trajectory, op: DiscreteOperator, m: float, t_star: float) -> EstimateReport:
    """kappa0 = inf u t^(1/(m-1)) / ((1 ^ t/t_*)^(m/(m-1)) Phi1) must be positive."""
    theorem = "universal_lower"
    if traj.is_trivial:
        return _skipped(theorem, "trivial trajectory")
    times, snaps = _positive(traj)
    a = _alpha(m)
    factor = np.minimum(1.0, times / t_star) ** (a * m)
    ratio = times[:, None] ** a * snaps / (factor[:, None] * op.phi1)
    report = EstimateReport(theorem=theorem)
    report.constants.update(kappa0=float(ratio.min()), t_star=t_star)
    report.worst_node, report.worst_time = _worst(ratio, times, largest=False)
    return _finish(report, bool(ratio.min() > 0))


def check_matching_lower(traj: Trajectory, op: DiscreteOperator, m: float, t_star: float,
                         trend_tol: float = TREND_TOL) -> EstimateReport:
    """
    Lower bound with the matching boundary power.

    RFL/CFL: Phi1^(sigma/m) with the (1 ^ t/t_*) factor, all t > 0.
    SFL with sigma = 1: Phi1^(1/m) for t >= t_*.
    SFL with sigma < 1: not asserted.
    The final-time ratio must not vanish toward the boundary (log-slope <= trend_tol).
    """
    theorem = "matching_lower"
    if traj.is_trivial:
        return _skipped(theorem, "trivial trajectory")
    sigma, _ = sigma_of(op.s, m, op.gamma)
    a = _alpha(m)
    times, snaps = _positive(traj)

    if op.kind is OperatorKind.SFL:
        if sigma < 1:
            return _skipped(theorem, f"sigma = {sigma:.4g} < 1: no matching lower bound for small data")
        late = times >= t_star
        if not late.any():
            return _skipped(theorem, f"no snapshots after t_* = {t_star:.4g}")
        times, snaps = times[late], snaps[late]
        factor = np.ones_like(times)
    else:
        factor = np.minimum(1.0, times / t_star) ** (a * m)

    comparator = op.phi1 ** (sigma / m)
    ratio = times[:, None] ** a * snaps / (factor[:, None] * comparator)
    report = EstimateReport(theorem=theorem)
    report.constants.update(kappa=float(ratio.min()), sigma=sigma, t_star=t_star)
    report.worst_node, report.worst_time = _worst(ratio, times, largest=False)
    trend = _fit_or_none(ratio[-1], op.grid, report.notes, "final ratio trend")
    trend_ok = True
    if trend is not None:
        report.constants["final_ratio_trend"] = trend
        trend_ok = trend <= trend_tol
    return _finish(report, bool(ratio.min() > 0) and trend_ok)


def check_counterexample_upper(traj: Trajectory, op: DiscreteOperator, m: float, C0: float,
                               probe_times: Optional[Sequence[float]] = None,
                               exponent_tol: float = 0.1, late_tol: float = EXPONENT_TOL) -> EstimateReport:
    """
    Data below C0 Phi1 satisfy u^m <= C0 kappa_hat Phi1 / t.

    Also checks that u(t)^m decays at least like Phi1 at the boundary and,
    when sigma < 1, that the late-time exponent of u is >= 1 - 2s/gamma.

    Raises:
        PreconditionError: u0 is not dominated by C0 Phi1.
    """
    theorem = "counterexample_upper"
    u0 = traj.snapshots[0]
    if np.any(u0 > C0 * op.phi1 * (1.0 + 1e-9)):
        raise PreconditionError(f"Initial datum is not dominated by C0*Phi1 with C0={C0}")
    if traj.is_trivial:
        return _skipped(theorem, "trivial trajectory")

    times, snaps = _positive(traj)
    ratio = times[:, None] * snaps ** m / (C0 * op.phi1)
    report = EstimateReport(theorem=theorem)
    report.constants["kappa_hat"] = float(ratio.max())
    report.worst_node, report.worst_time = _worst(ratio, times)

    probes = _default_probe_times(traj.times) if probe_times is None else np.asarray(probe_times, dtype=float)
    exponents = {}
    for t in probes:
        beta = _phi_exponent(traj.snapshots[traj.index_of(t)] ** m, op, report.notes, f"u^m at t={t:g}")
        if beta is not None:
            exponents[float(t)] = beta
    report.constants["u_power_m_exponents"] = exponents
    exponent_ok = all(beta >= 1.0 - exponent_tol for beta in exponents.values())

    sigma, _ = sigma_of(op.s, m, op.gamma)
    floor = 1.0 - 2.0 * op.s / op.gamma
    late_ok = True
    if sigma < 1:
        late = _phi_exponent(traj.final, op, report.notes, "late-time u")
        if late is not None:
            report.constants.update(late_exponent=late, exponent_floor=floor)
            late_ok = late >= floor - late_tol
    else:
        report.notes.append(
            f"sigma = 1: the floor 1 - 2s/gamma = {floor:.4g} does not constrain beyond the matching power 1/m"
        )
    return _finish(report, bool(np.isfinite(ratio.max())) and exponent_ok and late_ok)


def check_small_data_supersolution(traj: Trajectory, op: DiscreteOperator, m: float, A: float,
                                   exponent_tol: float = EXPONENT_TOL) -> EstimateReport:
    """
    For sigma < 1 and u0 <= A Phi1^(1-2s/gamma):

        u(t) <= Phi1^(1-2s/gamma) (A^(1-m) - C t)^(-1/(m-1))

    with the smallest such C fitted from the data; the early-time boundary
    exponent of u must match 1 - 2s/gamma.
    """
    theorem = "small_data_supersolution"
    sigma, _ = sigma_of(op.s, m, op.gamma)
    if sigma >= 1:
        return _skipped(theorem, "sigma = 1: supersolution regime does not apply")
    power = 1.0 - 2.0 * op.s / op.gamma
    comparator = op.phi1 ** power
    if np.any(traj.snapshots[0] > A * comparator * (1.0 + 1e-9)):
        return _skipped(theorem, f"datum not below A*Phi1^{power:.4g} with A={A}")
    if traj.is_trivial:
        return _skipped(theorem, "trivial trajectory")

    times, snaps = _positive(traj)
    r = np.max(snaps / comparator, axis=1)
    base = A ** (1.0 - m)
    with np.errstate(divide="ignore"):
        needed = np.where(r > 0, (base - r ** (1.0 - m)) / times, -np.inf)
    C = max(0.0, float(needed.max()))
    report = EstimateReport(theorem=theorem)
    report.constants.update(C_tilde=C, exponent=power)
    report.constants["T_A"] = base / C if C > 0 else math.inf
    report.worst_time = float(times[int(np.argmax(needed))])

    early = _phi_exponent(snaps[0], op, report.notes, "early-time u")
    early_ok = True
    if early is not None:
        report.constants["early_exponent"] = early
        early_ok = abs(early - power) <= exponent_tol
    return _finish(report, math.isfinite(C) and early_ok)


def _half_mass_time(times: np.ndarray, mass: np.ndarray) -> float:
    below = np.nonzero(mass <= 0.5 * mass[0])[0]
    if below.size == 0:
        return math.inf
    k = int(below[0])
    m_prev, m_next = mass[k - 1], mass[k]
    frac = (m_prev - 0.5 * mass[0]) / (m_prev - m_next)
    return float(times[k - 1] + frac * (times[k] - times[k - 1]))


def _weighted_mass(traj: Trajectory, phi1: np.ndarray) -> np.ndarray:
    h = 2.0 / (len(traj.nodes) + 1)
    return h * (traj.snapshots @ phi1)


def check_backward_weighted_mass(traj: Trajectory, phi1: np.ndarray, m: float,
                                 companion: Optional[Trajectory] = None,
                                 s: Optional[float] = None, gamma: Optional[float] = None) -> EstimateReport:
    """
    Half of the Phi1-mass is retained on a window of length ~ ||u0||^-(m-1).

    The half-mass time Delta is the largest window where retention holds;
    the window constant is K = (Delta ||u0||^(m-1))^(-2s theta) / 2 with
    theta = 1/(2s + (1+gamma)(m-1)). A companion run from a rescaled datum
    checks the predicted scaling of Delta.
    """
    theorem = "backward_weighted_mass"
    if traj.is_trivial:
        return _skipped(theorem, "trivial trajectory")
    s = float(traj.operator.get("s")) if s is None else s
    gamma = float(traj.operator.get("gamma")) if gamma is None else gamma

    mass = _weighted_mass(traj, phi1)
    rise = float(np.max(mass - np.minimum.accumulate(mass)))
    delta = _half_mass_time(traj.times, mass)
    theta = 1.0 / (2.0 * s + (1.0 + gamma) * (m - 1.0))
    report = EstimateReport(theorem=theorem)
    report.constants.update(half_mass_time=delta, theta=theta, mass0=float(mass[0]), max_mass_increase=rise)
    if math.isfinite(delta):
        report.constants["K_bar"] = 0.5 * (delta * mass[0] ** (m - 1.0)) ** (-2.0 * s * theta)
    else:
        report.notes.append(f"half of the mass retained up to t_end = {traj.times[-1]:g}")

    scaling_ok = True
    if companion is not None and not companion.is_trivial:
        mass_c = _weighted_mass(companion, phi1)
        delta_c = _half_mass_time(companion.times, mass_c)
        predicted = (mass_c[0] / mass[0]) ** (-(m - 1.0))
        report.constants.update(predicted_window_ratio=predicted)
        if math.isfinite(delta) and math.isfinite(delta_c):
            observed = delta_c / delta
            report.constants["observed_window_ratio"] = observed
            scaling_ok = 0.5 <= observed / predicted <= 2.0
        else:
            report.notes.append("companion window ratio not available")
    return _finish(report, rise <= 1e-10 * mass[0] and scaling_ok)


def check_kato(op: DiscreteOperator, m: float, f: np.ndarray, tol: float = KATO_TOL) -> EstimateReport:
    """Componentwise A(f^m) <= m f^(m-1) A f for positive f."""
    theorem = "kato"
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise PreconditionError("Kato inequality check needs a strictly positive vector")
    right = m * f ** (m - 1.0) * (op.A @ f)
    left = op.A @ f ** m
    slack = right - left
    scale = float(max(np.abs(right).max(), np.abs(left).max()))
    report = EstimateReport(theorem=theorem)
    report.constants["min_slack"] = float(slack.min())
    report.worst_node = int(np.argmin(slack))
    return _finish(report, slack.min() >= -tol * scale)


def check_kato_samples(op: DiscreteOperator, m: float, seed: int, samples: int = KATO_SAMPLES,
                       value_range: Tuple[float, float] = KATO_RANGE) -> EstimateReport:
    """Kato inequality on seeded uniform random vectors; the worst sample is reported."""
    rng = np.random.default_rng(seed)
    reports = [check_kato(op, m, rng.uniform(*value_range, op.grid.n)) for _ in range(samples)]
    failed = [r for r in reports if r.failed]
    worst = failed[0] if failed else min(reports, key=lambda r: r.constants["min_slack"])
    worst.constants.update(samples=samples, failed_samples=len(failed), seed=seed)
    return worst


def check_ghp(traj: Trajectory, op: DiscreteOperator, m: float, t_star: float,
              trend_tol: float = TREND_TOL) -> EstimateReport:
    """
    Two-sided global Harnack bounds.

    RFL/CFL: matching Phi1^(sigma/m) on both sides for all t, lower side
    with the (1 ^ t/t_*) factor. SFL with sigma = 1: matching bounds for
    t >= t_*, upper side log-corrected in the critical case. SFL with
    sigma < 1: lower comparator Phi1, upper Phi1^(sigma/m).
    """
    theorem = "global_harnack"
    if traj.is_trivial:
        return _skipped(theorem, "trivial trajectory")
    sigma, critical = sigma_of(op.s, m, op.gamma)
    a = _alpha(m)
    times, snaps = _positive(traj)
    phi1 = op.phi1

    if op.kind is not OperatorKind.SFL:
        regime = "matching"
        lower_comp = upper_comp = phi1 ** (sigma / m)
        factor = np.minimum(1.0, times / t_star) ** (a * m)
    elif sigma >= 1:
        regime = "matching_after_critical_time"
        late = times >= t_star
        if not late.any():
            return _skipped(theorem, f"no snapshots after t_* = {t_star:.4g}")
        times, snaps = times[late], snaps[late]
        lower_comp = phi1 ** (1.0 / m)
        upper_comp = boundary_comparator(phi1, m, sigma, critical)
        factor = np.ones_like(times)
    else:
        regime = "non_matching"
        lower_comp = phi1
        upper_comp = phi1 ** (sigma / m)
        factor = np.minimum(1.0, times / t_star) ** (a * m)

    scaled = times[:, None] ** a * snaps
    lower = scaled / (factor[:, None] * lower_comp)
    upper = scaled / upper_comp
    report = EstimateReport(theorem=theorem)
    report.constants.update(regime=regime, kappa_low=float(lower.min()), kappa_high=float(upper.max()),
                            sigma=sigma, critical=critical)
    report.worst_node, report.worst_time = _worst(lower, times, largest=False)

    ok = bool(lower.min() > 0) and bool(np.isfinite(upper.max()))
    low_trend = _fit_or_none(lower[-1], op.grid, report.notes, "lower ratio trend")
    high_trend = _fit_or_none(upper[-1], op.grid, report.notes, "upper ratio trend")
    if low_trend is not None:
        report.constants["lower_trend"] = low_trend
        ok = ok and low_trend <= trend_tol
    if high_trend is not None:
        report.constants["upper_trend"] = high_trend
        ok = ok and high_trend >= -trend_tol
    return _finish(report, ok)


def check_local_harnack(traj: Trajectory, op: DiscreteOperator, t_star: float,
                        ball: Tuple[float, float] = (0.0, 0.25), m: Optional[float] = None) -> EstimateReport:
    """
    sup_B u(t) <= H (1 ^ t/t_*)^(-m/(m-1)) inf_B u(t) on a ball B with 2B inside the interval.

    Also fits the forward-backward constant H' of
    sup_B u(t) <= H' [(1 + h/t)(1 ^ t/t_*)^(-m)]^(1/(m-1)) inf_B u(t + h), h in {t/2, t}.

    Raises:
        PreconditionError: the doubled ball leaves the interval.
    """
    theorem = "local_harnack"
    center, radius = ball
    if radius < 0 or abs(center) + 2.0 * radius >= 1.0:
        raise PreconditionError(f"Ball {ball} with doubled radius is not inside (-1, 1)")
    if traj.is_trivial:
        return _skipped(theorem, "trivial trajectory")
    m = traj.config.m if m is None else m
    a = _alpha(m)

    inside = np.abs(op.grid.nodes - center) <= radius + 1e-12
    if not inside.any():
        inside[op.grid.index_near(center)] = True
    times, snaps = _positive(traj)
    local = snaps[:, inside]
    sup_b, inf_b = local.max(axis=1), local.min(axis=1)
    report = EstimateReport(theorem=theorem)
    if np.any(inf_b <= 0):
        report.notes.append("solution vanishes somewhere in the ball")
        report.constants["H"] = math.inf
        return _finish(report, False)

    damping = np.minimum(1.0, times / t_star)
    harnack = sup_b / inf_b * damping ** (a * m)
    report.constants["H"] = max(1.0, float(harnack.max()))
    report.worst_time = float(times[int(np.argmax(harnack))])

    forward = 1.0
    for frac in (0.5, 1.0):
        later = times * (1.0 + frac)
        valid = later <= times[-1]
        if not valid.any():
            continue
        inf_later = np.interp(later[valid], times, inf_b)
        bound = ((1.0 + frac) * damping[valid] ** (-m)) ** a
        forward = max(forward, float(np.max(sup_b[valid] / inf_later / bound)))
    report.constants["H_forward"] = forward
    report.constants["ball"] = [center, radius]
    return _finish(report, math.isfinite(report.constants["H"]) and math.isfinite(forward))


def _separable_factor(times: np.ndarray, m: float) -> np.ndarray:
    """
    t^(1/(m-1)) b_k for the scheme's own separable solution b_k S.

    b_k + dt b_k^m = b_k-1 with b equal to ((m-1) t)^(-1/(m-1)) at the first
    time; tends to (m-1)^(-1/(m-1)) up to the time-stepping bias.
    """
    a = _alpha(m)
    b = ((m - 1.0) * times[0]) ** (-a)
    factors = [b]
    for dt in np.diff(times):
        prev = b
        for _ in range(100):
            g = b + dt * b ** m - prev
            b -= g / (1.0 + dt * m * b ** (m - 1.0))
            if abs(g) <= 1e-15 * prev:
                break
        factors.append(b)
    return times ** a * np.asarray(factors)


def _envelope_t0(times: np.ndarray, err: np.ndarray, c: float) -> float:
    """Smallest snapshot time t0 with err(t) <= c t0/(t0 + t) for every t >= t0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        needed = np.where(err < c, err * times / (c - err), np.inf)
    worst_ahead = np.maximum.accumulate(needed[::-1])[::-1]
    feasible = np.nonzero(times >= worst_ahead)[0]
    return float(times[feasible[0]]) if feasible.size else math.inf


def check_asymptotics(traj: Trajectory, profile: Profile, m: float,
                      companion: Optional[Trajectory] = None,
                      tol: float = ASYMPTOTIC_TOL) -> EstimateReport:
    """
    Convergence of t^(1/(m-1)) u(t) to the attracting profile.

    With L S^m = S the attractor is (m-1)^(-1/(m-1)) S; it is taken along
    the scheme's own separable solution on the same time grid so that the
    backward-Euler bias does not count as an error.

    e(t) = ||t^(1/(m-1)) u(t) - q(t) S||_inf must decrease over the last
    half-decade and end below tol times the attractor's sup norm. Where
    matching bounds apply, the smallest t0 with ||u/U - 1|| <= (2/(m-1)) t0/(t0+t)
    is fitted; a companion run checks t0 ~ ||u0||^-(m-1).
    """
    theorem = "asymptotics"
    if traj.is_trivial:
        return _skipped(theorem, "trivial trajectory")
    a = _alpha(m)
    times, snaps = _positive(traj)
    q = _separable_factor(times, m)
    scaled = times[:, None] ** a * snaps
    target = q[:, None] * profile.S
    size = float(target[-1].max())
    err = np.max(np.abs(scaled - target), axis=1)

    report = EstimateReport(theorem=theorem)
    report.constants["final_relative_error"] = float(err[-1] / size)
    tail = times >= times[-1] / math.sqrt(10.0)
    decreasing = bool(np.all(np.diff(err[tail]) <= 1e-9 * size))
    report.constants["eventually_decreasing"] = decreasing
    ok = decreasing and err[-1] <= tol * size

    kind = OperatorKind.parse(traj.operator.get("kind", "SFL"))
    sigma, _ = sigma_of(float(traj.operator["s"]), m, float(traj.operator["gamma"]))
    if kind is OperatorKind.SFL and sigma < 1:
        report.notes.append("relative-error envelope not asserted without matching bounds")
        return _finish(report, ok)

    c = 2.0 / (m - 1.0)
    t0 = _envelope_t0(times, np.max(np.abs(scaled / target - 1.0), axis=1), c)
    report.constants.update(envelope_constant=c, t0=t0)
    ok = ok and math.isfinite(t0)
    if companion is not None and not companion.is_trivial:
        times_c, snaps_c = _positive(companion)
        scaled_c = times_c[:, None] ** a * snaps_c
        target_c = _separable_factor(times_c, m)[:, None] * profile.S
        t0_c = _envelope_t0(times_c, np.max(np.abs(scaled_c / target_c - 1.0), axis=1), c)
        magnitude = float(companion.snapshots[0].max() / traj.snapshots[0].max())
        predicted = magnitude ** (-(m - 1.0))
        report.constants.update(companion_t0=t0_c, predicted_t0_ratio=predicted)
        if math.isfinite(t0) and math.isfinite(t0_c) and t0 > 0:
            observed = t0_c / t0
            report.constants["observed_t0_ratio"] = observed
            ok = ok and 0.5 <= observed / predicted <= 2.0
    return _finish(report, ok)


def exponent_timeseries(traj: Trajectory, grid: Grid, m: float,
                        window: Optional[Tuple[float, float]] = None,
                        probe_times: Optional[Sequence[float]] = None,
                        corrections: Sequence[float] = ()) -> ExponentSeries:
    """
    Boundary exponent of t^(1/(m-1)) u(t) at each probe time.

    Defaults to log-spaced positive snapshot times. corrections are passed
    to boundary_exponent_fit. Fit errors propagate.
    """
    window = window if window is not None else (4.0 * grid.h, 0.2)
    probes = _default_probe_times(traj.times) if probe_times is None else np.asarray(probe_times, dtype=float)
    betas, errors = [], []
    for t in probes:
        k = traj.index_of(t)
        fit = boundary_exponent_fit(traj.times[k] ** _alpha(m) * traj.snapshots[k], grid, window,
                                   corrections=corrections)
        betas.append(fit.beta)
        errors.append(fit.stderr)
    return ExponentSeries(times=np.asarray(probes, dtype=float), beta=np.asarray(betas),
                          stderr=np.asarray(errors), window=tuple(window))


def check_weighted_mass_decay(traj: Trajectory, op: DiscreteOperator, tol: float = 1e-9) -> EstimateReport:
    """
    The Phi1-mass is nonincreasing and obeys the discrete dual identity
    Phi1.(u_k - u_k-1) = -dt lambda1 Phi1.flux(u_k).
    """
    theorem = "weighted_mass_decay"
    if traj.is_trivial:
        return _skipped(theorem, "trivial trajectory")
    mass = op.grid.h * (traj.snapshots @ op.phi1)
    rise = float(np.max(mass - np.minimum.accumulate(mass)))
    delta = traj.config.delta
    flux = (traj.snapshots[1:] + delta) ** traj.config.m - delta ** traj.config.m
    dt = np.diff(traj.times)
    predicted = -dt * op.lambda1 * op.grid.h * (flux @ op.phi1)
    mismatch = float(np.max(np.abs(np.diff(mass) - predicted))) / float(mass[0])
    report = EstimateReport(theorem=theorem)
    report.constants.update(max_mass_increase=rise, dual_identity_error=mismatch)
    return _finish(report, rise <= tol * mass[0] and mismatch <= 1e-6)


def check_weighted_lp_lower(traj: Trajectory, op: DiscreteOperator, t_star: float,
                            p: float = 2.0) -> EstimateReport:
    """c2 = min over 0 < t <= t_* of int u^p Phi1 / (int u0 Phi1)^p must be positive."""
    theorem = "weighted_lp_lower"
    if traj.is_trivial:
        return _skipped(theorem, "trivial trajectory")
    times, snaps = _positive(traj)
    early = times <= t_star
    if not early.any():
        return _skipped(theorem, f"no snapshots in (0, t_* = {t_star:.4g}]")
    h = op.grid.h
    mass0 = h * float(traj.snapshots[0] @ op.phi1)
    moments = h * (snaps[early] ** p @ op.phi1)
    ratio = moments / mass0 ** p
    report = EstimateReport(theorem=theorem)
    report.constants.update(c2=float(ratio.min()), p=p, t_star=t_star)
    report.worst_time = float(times[early][int(np.argmin(ratio))])
    return _finish(report, bool(ratio.min() > 0))


def refinement_exponent_study(kind: Any, s: float, sizes: Sequence[int],
                              window: Optional[Tuple[float, float]] = None) -> List[Dict[str, float]]:
    """
    Boundary exponent of Phi1 on a sequence of grids.

    Each row carries the plain log-log slope (beta) and the slope with the
    dist^(2s) and dist corrections fitted out (beta_corrected). The plain
    slope drifts towards gamma slowly as the window's inner edge 4h shrinks.
    """
    results = []
    for n in sizes:
        grid = build_grid(n)
        op = build_operator(kind, grid, s)
        fit = boundary_exponent_fit(op.phi1, grid, window)
        corrected = boundary_exponent_fit(op.phi1, grid, window,
                                          corrections=correction_exponents(op.gamma, op.s, op.gamma))
        results.append({"n": int(n), "beta": fit.beta, "stderr": fit.stderr,
                        "beta_corrected": corrected.beta, "stderr_corrected": corrected.stderr})
        logger.info(f"Refinement n={n}: Phi1 exponent {fit.beta:.4f} +/- {fit.stderr:.1e}, "
                    f"corrected {corrected.beta:.4f} +/- {corrected.stderr:.1e}")
    return results


def check_comparison(lower: Trajectory, upper: Trajectory, tol: float = 1e-8) -> EstimateReport:
    """Ordered data stay ordered: u0 <= v0 implies u(t) <= v(t) on the common schedule."""
    theorem = "comparison"
    if lower.snapshots.shape != upper.snapshots.shape or not np.array_equal(lower.times, upper.times):
        raise PreconditionError("Comparison needs trajectories on the same grid and schedule")
    if np.any(lower.snapshots[0] > upper.snapshots[0]):
        raise PreconditionError("Initial data are not ordered")
    excess = lower.snapshots - upper.snapshots
    scale = float(max(np.abs(upper.snapshots).max(), 1e-300))
    report = EstimateReport(theorem=theorem)
    report.constants["max_excess"] = float(excess.max())
    report.worst_node, report.worst_time = _worst(excess, lower.times)
    return _finish(report, excess.max() <= tol * scale)
