#!/usr/bin/env python3
"""
Jump-kernel extraction and two-sided bound checks

Reads the jump kernel K and zero-order term B off an operator matrix and
compares K, B and the Green function with the comparators they are
expected to match up to constants.

Author: fpme-lab developers
License: MIT
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from operators import DiscreteOperator, GreenMatrix, OperatorKind
from utils import StructuralError

logger = logging.getLogger(__name__)

PASS = "pass"
FAIL = "fail"
SKIPPED = "skipped"

DEFAULT_CAP = 50.0
# pairs this close (in grid indices) are dominated by quadrature error
NEIGHBOR_EXCLUSION = 2
STRUCTURE_TOL = 1e-12


@dataclass(frozen=True)
class KernelDecomposition:
    """K (density units, zero diagonal) and B such that A f = sum K (f_i - f_j) h + B f."""

    K: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)
    h: float


@dataclass
class BoundCheckReport:
    """Ratio extrema of a quantity against its comparator, with a verdict."""

    name: str
    c_low: float = float("nan")
    c_high: float = float("nan")
    cap: Optional[float] = DEFAULT_CAP
    skipped: bool = False
    verdict: str = SKIPPED
    notes: List[str] = field(default_factory=list)
    parts: List["BoundCheckReport"] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    @classmethod
    def from_ratios(cls, name: str, ratios: np.ndarray, cap: Optional[float] = DEFAULT_CAP,
                    notes: Optional[List[str]] = None) -> "BoundCheckReport":
        """
        Build a report from an array of ratios.

        With cap=None only 0 < c_low and c_high < inf are required.
        """
        ratios = np.asarray(ratios, dtype=float)
        report = cls(name=name, cap=cap, notes=list(notes or []))
        if ratios.size == 0:
            report.skipped = True
            report.notes.append("no admissible pairs")
            return report
        report.c_low = float(np.min(ratios))
        report.c_high = float(np.max(ratios))
        report.verdict = PASS if _ratio_ok(report.c_low, report.c_high, cap) else FAIL
        return report

    @classmethod
    def combined(cls, name: str, parts: List["BoundCheckReport"],
                 notes: Optional[List[str]] = None) -> "BoundCheckReport":
        """Aggregate report; passes only if every non-skipped part passes. Extrema stay with the parts."""
        report = cls(name=name, cap=None, notes=list(notes or []), parts=list(parts))
        active = [p for p in parts if not p.skipped]
        if not active:
            report.skipped = True
            return report
        report.verdict = PASS if all(p.passed for p in active) else FAIL
        return report

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "c_low": self.c_low,
            "c_high": self.c_high,
            "cap": self.cap,
            "skipped": self.skipped,
            "verdict": self.verdict,
            "notes": list(self.notes),
            "parts": [p.to_dict() for p in self.parts],
        }


def _ratio_ok(c_low: float, c_high: float, cap: Optional[float]) -> bool:
    if not (0 < c_low <= c_high < np.inf):
        return False
    return cap is None or c_high / c_low <= cap


def decompose_kernel(op: DiscreteOperator, tol: float = STRUCTURE_TOL) -> KernelDecomposition:
    """
    Split op.A into jump kernel and zero-order term.

    Raises:
        StructuralError: an off-diagonal entry is positive beyond tol*max|A|.
    """
    A = op.A
    h = op.grid.h
    off = A.copy()
    np.fill_diagonal(off, 0.0)
    worst = float(off.max()) if off.size else 0.0
    limit = tol * float(np.abs(A).max())
    if worst > limit:
        i, j = np.unravel_index(int(np.argmax(off)), off.shape)
        raise StructuralError(
            f"{op.kind.value} matrix has positive off-diagonal A[{i},{j}] = {worst:.3e} "
            f"(tolerance {limit:.3e})"
        )
    K = -off / h
    B = A.sum(axis=1)
    logger.debug(f"Kernel decomposition: min B={B.min():.3e}, max K={K.max():.3e}")
    return KernelDecomposition(K=K, B=B, h=h)


def reassemble(kd: KernelDecomposition) -> np.ndarray:
    """Rebuild the matrix from K and B."""
    hk = kd.h * kd.K
    A = -hk
    idx = np.arange(len(kd.B))
    A[idx, idx] = kd.B + hk.sum(axis=1)
    return A


def _far_pairs(n: int, exclusion: int = NEIGHBOR_EXCLUSION) -> np.ndarray:
    idx = np.arange(n)
    return np.abs(idx[:, None] - idx[None, :]) > exclusion


def _separation(op: DiscreteOperator) -> np.ndarray:
    x = op.grid.nodes
    return np.abs(x[:, None] - x[None, :])


def _degenerate_factor(phi1: np.ndarray, sep: np.ndarray, gamma: float) -> np.ndarray:
    # min(Phi(x)/|x-y|^gamma, 1) * min(Phi(y)/|x-y|^gamma, 1)
    scaled = sep ** gamma
    return np.minimum(phi1[:, None] / scaled, 1.0) * np.minimum(phi1[None, :] / scaled, 1.0)


def check_kernel_bounds(kd: KernelDecomposition, op: DiscreteOperator,
                        cap: float = DEFAULT_CAP) -> BoundCheckReport:
    """
    Compare the extracted kernel with its expected two-sided form.

    RFL/CFL: uniform positivity of K plus the ratio K/|x-y|^(-1-2s).
    SFL: ratio of K to the boundary-degenerate comparator, and B*Phi1^(2s/gamma).
    Pairs with |i-j| <= 2 are excluded.

    Args:
        kd: Decomposition of op.
        op: Operator the decomposition came from.
        cap: Largest accepted c_high/c_low.

    Returns:
        Combined report with one part per bound.
    """
    s = op.s
    mask = _far_pairs(op.grid.n)
    sep = _separation(op)
    power = np.where(mask, sep, 1.0) ** (-1.0 - 2.0 * s)
    K = kd.K[mask]

    parts = []
    if op.kind in (OperatorKind.RFL, OperatorKind.CFL):
        positivity = BoundCheckReport.from_ratios("kernel_lower", K, cap=None)
        positivity.notes.append(f"min K = {positivity.c_low:.6g}")
        parts.append(positivity)
        parts.append(BoundCheckReport.from_ratios("kernel_profile", K / power[mask], cap=cap))
    else:
        comparator = power * _degenerate_factor(op.phi1, np.where(mask, sep, 1.0), op.gamma)
        parts.append(BoundCheckReport.from_ratios("kernel_degenerate", K / comparator[mask], cap=cap))
        weighted_B = kd.B * op.phi1 ** (2.0 * s / op.gamma)
        parts.append(BoundCheckReport.from_ratios("zero_order_term", weighted_B, cap=cap))

    report = BoundCheckReport.combined(f"kernel_bounds_{op.kind.value}", parts)
    logger.info(f"Kernel bounds ({op.kind.value}, s={s}): {report.verdict}")
    return report


def check_green_bounds(green: GreenMatrix, op: DiscreteOperator,
                       cap: float = DEFAULT_CAP) -> BoundCheckReport:
    """
    Two-sided Green-function bounds.

    Only attempted when 1 - 2s > 0; in one dimension the remaining range
    needs a different comparator and is reported as skipped.
    """
    name = f"green_bounds_{op.kind.value}"
    if op.s >= 0.5:
        report = BoundCheckReport(name=name, cap=cap, skipped=True, verdict=SKIPPED)
        report.notes.append(f"s = {op.s} >= 1/2: one-dimensional Green bounds not checked")
        logger.info(f"Green bounds skipped for s={op.s}")
        return report

    G = green.kernel
    phi1 = op.phi1
    mask = _far_pairs(op.grid.n)
    sep = np.where(mask, _separation(op), 1.0)
    singular = sep ** (2.0 * op.s - 1.0)

    lower = BoundCheckReport.from_ratios("green_lower", (G / np.outer(phi1, phi1)).ravel(), cap=None)
    upper = BoundCheckReport.from_ratios("green_upper", (G / singular)[mask], cap=None)
    matching = BoundCheckReport.from_ratios(
        "green_matching", (G / (singular * _degenerate_factor(phi1, sep, op.gamma)))[mask], cap=cap,
    )
    report = BoundCheckReport.combined(name, [lower, upper, matching])
    logger.info(f"Green bounds ({op.kind.value}, s={op.s}): {report.verdict}")
    return report
