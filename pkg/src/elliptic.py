#!/usr/bin/env python3
"""
Stationary profile and separate-variables solutions

Solves L S^m = S by the monotone fixed point W -> G W^(1/m) in W = S^m,
started from a sub- and a super-solution, verifies the two-sided boundary
bounds of S and fits boundary exponents.

Author: fpme-lab developers
License: MIT
"""

import logging
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, stats

from kernels import DEFAULT_CAP, FAIL, PASS, BoundCheckReport
from operators import DiscreteOperator, Grid, GreenMatrix, sigma_of
from utils import DomainError, FitError, NumericalError

logger = logging.getLogger(__name__)

SUB_START = 1e-3
SUPER_START = 1e3
DAMPING_PATIENCE = 20
MAX_ITER = 10_000
MIN_FIT_NODES = 10
MIN_CORRECTION = 0.05
TREND_TOL = 0.15


class ExponentFit(NamedTuple):
    beta: float
    stderr: float


@dataclass(frozen=True)
class Profile:
    """Positive solution of L S^m = S on the grid."""

    S: np.ndarray = field(repr=False)
    residual: float
    iterations: int
    m: float
    gap: float = 0.0

    def to_rows(self, grid: Grid, phi1: np.ndarray) -> List[Tuple[float, float, float, float]]:
        """Rows (x, dist, S, phi1) for CSV export."""
        return list(zip(grid.nodes, grid.dist, self.S, phi1))


def boundary_comparator(phi1: np.ndarray, m: float, sigma: float, critical: bool) -> np.ndarray:
    """Phi1^(sigma/m), times (1 + |log Phi1|)^(1/(m-1)) in the critical case."""
    comparator = phi1 ** (sigma / m)
    if critical:
        comparator = comparator * (1.0 + np.abs(np.log(phi1))) ** (1.0 / (m - 1.0))
    return comparator


class _FixedPointRun:
    """One monotone sequence W_k+1 = G W_k^(1/m)."""

    def __init__(self, green: GreenMatrix, W0: np.ndarray, m: float, label: str):
        self.green = green
        self.m = m
        self.label = label
        self.W = W0
        self.S = W0 ** (1.0 / m)
        self.residual = np.inf
        self.iterations = 0
        self.done = False
        self._damping = False
        self._stalled = 0

    def step(self, tol: float):
        W_new = self.green.apply(self.S)
        if np.any(W_new <= 0) or not np.all(np.isfinite(W_new)):
            raise NumericalError(f"{self.label} iterate lost positivity at step {self.iterations + 1}")
        if self._damping:
            W_new = np.sqrt(self.W * W_new)
        S_new = W_new ** (1.0 / self.m)
        residual = float(np.max(np.abs(S_new - self.S)) / np.max(S_new))

        self._stalled = self._stalled + 1 if residual >= self.residual else 0
        if self._stalled >= DAMPING_PATIENCE and not self._damping:
            logger.warning(f"{self.label} iteration oscillating; switching to geometric damping")
            self._damping = True

        self.W, self.S, self.residual = W_new, S_new, residual
        self.iterations += 1
        self.done = residual <= tol
        logger.debug(f"{self.label} step {self.iterations}: residual {residual:.3e}")


def solve_profile(green: GreenMatrix, m: float, tol: float = 1e-10,
                  max_iter: int = MAX_ITER) -> Profile:
    """
    Solve L S^m = S by bracketed monotone iteration.

    The sub-solution run starts at (1e-3 Phi1)^m, the super-solution run at
    (1e3 comparator)^m; both must reach the same limit.

    Args:
        green: Green matrix of the operator.
        m: Porous-medium exponent, m > 1.
        tol: Sup-norm relative residual ||A S^m - S|| / ||S||.
        max_iter: Iteration cap per run.

    Returns:
        Profile from the super-solution run.

    Raises:
        NumericalError: the runs cross, stall, or disagree.
    """
    if m <= 1:
        raise DomainError(f"Porous-medium exponent must satisfy m > 1, got {m}")
    op = green.op
    sigma, critical = sigma_of(op.s, m, op.gamma)
    comparator = boundary_comparator(op.phi1, m, sigma, critical)

    # each run converges to a tenth of tol so their gap stays within 10*tol
    inner_tol = 0.1 * tol
    sub = _FixedPointRun(green, (SUB_START * op.phi1) ** m, m, "sub-solution")
    sup = _FixedPointRun(green, (SUPER_START * comparator) ** m, m, "super-solution")

    for _ in range(max_iter):
        for run in (sub, sup):
            if not run.done:
                run.step(inner_tol)
        overlap = float(np.max(sub.S - sup.S))
        if overlap > 10.0 * tol * float(np.max(sup.S)):
            raise NumericalError(
                f"Profile bracket crossed after {sub.iterations}/{sup.iterations} steps "
                f"(overlap {overlap:.3e})"
            )
        if sub.done and sup.done:
            break
    else:
        raise NumericalError(
            f"Profile iteration stalled after {max_iter} steps "
            f"(residuals {sub.residual:.3e}, {sup.residual:.3e})"
        )

    gap = float(np.max(np.abs(sup.S - sub.S)) / np.max(sup.S))
    if gap > 10.0 * tol:
        raise NumericalError(f"Sub- and super-solution limits differ by {gap:.3e} (> {10 * tol:.1e})")

    profile = Profile(S=sup.S, residual=sup.residual, iterations=max(sub.iterations, sup.iterations),
                      m=float(m), gap=gap)
    logger.info(
        f"Profile solved: {op.kind.value} s={op.s} m={m}, {profile.iterations} iterations, "
        f"residual {profile.residual:.2e}, gap {gap:.2e}"
    )
    return profile


def verify_profile_bounds(profile: Profile, op: DiscreteOperator, m: Optional[float] = None,
                          cap: float = DEFAULT_CAP, trend_tol: float = TREND_TOL,
                          comparator: Optional[np.ndarray] = None) -> BoundCheckReport:
    """
    Check c0 <= S / comparator <= c1.

    Besides the extrema, the boundary log-slope of the ratio must stay
    within trend_tol: a ratio that keeps growing or vanishing toward the
    boundary has the wrong exponent even if the grid caps its range.

    Args:
        profile: Solved profile.
        op: Operator the profile was solved for.
        m: Exponent (defaults to profile.m).
        cap: Largest accepted c_high/c_low.
        trend_tol: Largest accepted |log-slope| of the ratio.
        comparator: Override for negative controls; defaults to the sharp one.
    """
    m = profile.m if m is None else m
    sigma, critical = sigma_of(op.s, m, op.gamma)
    notes = [f"sigma = {sigma:.6g}", f"critical = {critical}"]
    if comparator is None:
        comparator = boundary_comparator(op.phi1, m, sigma, critical)
        if critical:
            notes.append("logarithmic comparator (1 + |log Phi1|)^(1/(m-1)) applied")
    ratio = profile.S / comparator

    parts = [BoundCheckReport.from_ratios("profile_ratio", ratio, cap=cap)]
    parts.append(_trend_report("profile_trend", ratio, op.grid, trend_tol))
    report = BoundCheckReport.combined("profile_bounds", parts, notes=notes)
    report.c_low, report.c_high = parts[0].c_low, parts[0].c_high
    return report


def _trend_report(name: str, ratio: np.ndarray, grid: Grid, trend_tol: float) -> BoundCheckReport:
    report = BoundCheckReport(name=name, cap=None)
    try:
        fit = boundary_exponent_fit(ratio, grid)
    except FitError as e:
        report.skipped = True
        report.notes.append(f"trend not fitted: {e}")
        return report
    report.c_low = report.c_high = fit.beta
    report.verdict = PASS if abs(fit.beta) <= trend_tol else FAIL
    report.notes.append(f"boundary log-slope {fit.beta:.4f} +/- {fit.stderr:.1e}")
    return report


def friendly_giant(profile: Profile, T: float, t: float) -> np.ndarray:
    """Separate-variables solution (T + t)^(-1/(m-1)) S."""
    if T < 0 or t < 0:
        raise DomainError(f"Times must be nonnegative, got T={T}, t={t}")
    if T + t <= 0:
        raise DomainError("Separate-variables solution undefined at T + t = 0")
    return (T + t) ** (-1.0 / (profile.m - 1.0)) * profile.S


def correction_exponents(beta: float, s: float, gamma: float) -> Tuple[float, ...]:
    """
    Powers of dist in the leading relative corrections to a dist^beta law.

    The nonlocal correction goes like dist^|gamma - beta - 2s| and the smooth
    one like dist. Powers at or below MIN_CORRECTION are dropped; they are
    indistinguishable from the intercept.
    """
    powers = {round(abs(gamma - beta - 2.0 * s), 12), 1.0}
    return tuple(sorted(k for k in powers if k > MIN_CORRECTION))


def boundary_exponent_fit(v: np.ndarray, grid: Grid,
                          window: Optional[Tuple[float, float]] = None,
                          corrections: Sequence[float] = ()) -> ExponentFit:
    """
    Least-squares slope of log v against log dist near the boundary.

    Both sides are pooled. The default window is (4h, 0.2); the three nodes
    nearest each boundary are always excluded. With corrections, log v is
    regressed on [log dist, 1, dist^k for k in corrections] so that a
    boundary law with curvature is not read as a biased slope.

    Raises:
        FitError: fewer than 10 nodes in the window, v <= 0 there or
            collinear correction terms.
    """
    d_min, d_max = window if window is not None else (4.0 * grid.h, 0.2)
    d_min = max(d_min, 3.0 * grid.h)
    dist = grid.dist
    mask = (dist > d_min * (1.0 + 1e-9)) & (dist < d_max)
    count = int(mask.sum())
    if count < MIN_FIT_NODES:
        raise FitError(f"Fit window ({d_min:.4g}, {d_max:.4g}) holds {count} nodes, need {MIN_FIT_NODES}")
    values = np.asarray(v, dtype=float)[mask]
    if np.any(values <= 0) or not np.all(np.isfinite(values)):
        raise FitError("Boundary exponent fit needs positive finite values in the window")
    x, y = np.log(dist[mask]), np.log(values)
    powers = sorted({float(k) for k in corrections if k > MIN_CORRECTION})
    if not powers:
        result = stats.linregress(x, y)
        return ExponentFit(beta=float(result.slope), stderr=float(result.stderr))

    design = np.column_stack([x, np.ones_like(x)] + [dist[mask] ** k for k in powers])
    unknowns = design.shape[1]
    coef, _, rank, _ = linalg.lstsq(design, y)
    if rank < unknowns:
        raise FitError(f"Correction terms {powers} are collinear in the fit window")
    resid = y - design @ coef
    variance = float(resid @ resid) / (count - unknowns)
    cov = variance * linalg.inv(design.T @ design)
    return ExponentFit(beta=float(coef[0]), stderr=float(np.sqrt(max(cov[0, 0], 0.0))))
