#!/usr/bin/env python3
"""
Discrete fractional Laplacians on the interval (-1, 1)

Builds the uniform interior grid and dense matrix realizations of the
restricted (RFL), spectral (SFL) and censored (CFL) fractional Laplacians,
together with their first eigenpair, Green matrix and the characteristic
boundary exponents gamma and sigma.

Every matrix acts on interior nodal values with homogeneous Dirichlet data
(zero extension outside the interval for RFL).

Author: fpme-lab developers
License: MIT
"""

import math
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Any, Dict, Tuple

import numpy as np
from scipy import linalg
from scipy.special import gamma as gamma_fn

from utils import ConfigError, DomainError, NumericalError

logger = logging.getLogger(__name__)

MIN_NODES = 8
EIGEN_TOL = 1e-12
EIGEN_MAX_ITER = 10_000
# extra inverse-iteration sweeps allowed once the tolerance is met
EIGEN_POLISH_ITER = 50
# Gauss-Legendre nodes for the per-cell interpolation-bias moments
_BUBBLE_NODES, _BUBBLE_WEIGHTS = np.polynomial.legendre.leggauss(16)


class OperatorKind(str, Enum):
    """Tag of the fractional Laplacian variant."""

    RFL = "RFL"
    SFL = "SFL"
    CFL = "CFL"

    @classmethod
    def parse(cls, tag: Any) -> "OperatorKind":
        if isinstance(tag, cls):
            return tag
        try:
            return cls(str(tag).upper())
        except ValueError:
            raise ConfigError(f"Unknown operator kind {tag!r} (expected RFL, SFL or CFL)")


@dataclass(frozen=True)
class Grid:
    """Uniform interior mesh of (-1, 1)."""

    n: int
    h: float
    nodes: np.ndarray
    dist: np.ndarray

    def index_near(self, x: float) -> int:
        """Index of the node closest to x."""
        return int(np.argmin(np.abs(self.nodes - x)))


@dataclass(frozen=True)
class DiscreteOperator:
    """Dense matrix realization of a fractional Laplacian plus its first eigenpair."""

    kind: OperatorKind
    s: float
    grid: Grid
    A: np.ndarray = field(repr=False)
    gamma: float
    lambda1: float
    phi1: np.ndarray = field(repr=False)

    def apply(self, f: np.ndarray) -> np.ndarray:
        return self.A @ f

    def scaled(self, factor: float) -> "DiscreteOperator":
        """Operator factor*A; eigenvector unchanged, eigenvalue scaled."""
        if factor <= 0:
            raise DomainError(f"Scaling factor must be positive, got {factor}")
        return replace(self, A=self.A * factor, lambda1=self.lambda1 * factor)

    def to_dict(self) -> Dict[str, Any]:
        """Provenance record; the matrix itself is omitted."""
        return {
            "kind": self.kind.value,
            "s": self.s,
            "n": self.grid.n,
            "h": self.grid.h,
            "gamma": self.gamma,
            "lambda1": self.lambda1,
            "nodes": self.grid.nodes,
            "phi1": self.phi1,
        }


@dataclass(frozen=True)
class GreenMatrix:
    """
    Inverse of an operator matrix.

    G has the quadrature weight folded in, so (G @ v)_i approximates
    the integral of Green(x_i, y) v(y) dy; `kernel` holds the pointwise
    values Green(x_i, x_j) = G_ij / h.
    """

    op: DiscreteOperator
    G: np.ndarray = field(repr=False)
    factor: Tuple[np.ndarray, bool] = field(repr=False, compare=False)

    @property
    def kernel(self) -> np.ndarray:
        return self.G / self.op.grid.h

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.G @ v

    def solve(self, v: np.ndarray) -> np.ndarray:
        """Apply the inverse through the stored Cholesky factor."""
        return linalg.cho_solve(self.factor, v)


def build_grid(n: int, min_nodes: int = MIN_NODES) -> Grid:
    """
    Build the uniform interior grid with n nodes.

    Args:
        n: Number of interior nodes.
        min_nodes: Smallest accepted n (tests lower it for hand-checkable grids).

    Returns:
        Grid with h = 2/(n+1) and nodes x_i = -1 + i*h.
    """
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool) or n < max(1, min_nodes):
        raise ConfigError(f"Grid needs an integer n >= {min_nodes}, got {n!r}")
    n = int(n)
    h = 2.0 / (n + 1)
    # integer numerators keep the mesh exactly symmetric about 0
    nodes = (2.0 * np.arange(1, n + 1) - (n + 1)) / (n + 1)
    dist = np.minimum(1.0 - nodes, 1.0 + nodes)
    nodes.setflags(write=False)
    dist.setflags(write=False)
    return Grid(n=n, h=h, nodes=nodes, dist=dist)


def build_dirichlet_laplacian(grid: Grid) -> np.ndarray:
    """Second-difference matrix: 2/h^2 on the diagonal, -1/h^2 off it."""
    n, h = grid.n, grid.h
    inv_h2 = 1.0 / (h * h)
    lap = np.zeros((n, n))
    idx = np.arange(n)
    lap[idx, idx] = 2.0 * inv_h2
    lap[idx[:-1], idx[:-1] + 1] = -inv_h2
    lap[idx[:-1] + 1, idx[:-1]] = -inv_h2
    return lap


def laplacian_eigenvalues(grid: Grid) -> np.ndarray:
    """Closed-form eigenvalues (2/h^2)(1 - cos(k pi/(n+1))), k = 1..n."""
    k = np.arange(1, grid.n + 1)
    return (2.0 / grid.h ** 2) * (1.0 - np.cos(k * np.pi / (grid.n + 1)))


def normalization_constant(s: float) -> float:
    """One-dimensional constant c_{1,s} = 4^s s Gamma(1/2+s) / (sqrt(pi) Gamma(1-s))."""
    return 4.0 ** s * s * gamma_fn(0.5 + s) / (math.sqrt(math.pi) * gamma_fn(1.0 - s))


def gamma_of(kind: Any, s: float) -> float:
    """
    Boundary exponent of the first eigenfunction.

    RFL: s; SFL: 1; CFL: s - 1/2 (defined for 1/2 < s < 1).
    """
    kind = OperatorKind.parse(kind)
    _check_order(kind, s)
    if kind is OperatorKind.RFL:
        return float(s)
    if kind is OperatorKind.SFL:
        return 1.0
    return float(_rational(s) - Fraction(1, 2))


def sigma_of(s: float, m: float, gamma: float) -> Tuple[float, bool]:
    """
    sigma = min(1, 2sm/(gamma(m-1))) and whether 2sm = gamma(m-1) exactly.

    Inputs are snapped to nearby rationals so the caption values
    (8/15, 2/5, ...) come out exact.
    """
    if m <= 1:
        raise DomainError(f"Porous-medium exponent must satisfy m > 1, got {m}")
    if gamma <= 0:
        raise DomainError(f"Boundary exponent must be positive, got {gamma}")
    if not 0 < s <= 1:
        raise DomainError(f"Fractional order must lie in (0, 1], got {s}")
    s_q, m_q, g_q = _rational(s), _rational(m), _rational(gamma)
    ratio = 2 * s_q * m_q / (g_q * (m_q - 1))
    critical = ratio == 1
    return float(min(Fraction(1), ratio)), critical


def build_sfl(grid: Grid, s: float) -> DiscreteOperator:
    """
    Spectral fractional Laplacian A = V diag(lambda_k^s) V^T.

    The first eigenvector is shared with the Dirichlet Laplacian.
    """
    _check_order(OperatorKind.SFL, s)
    lap = build_dirichlet_laplacian(grid)
    try:
        w, V = linalg.eigh(lap)
    except linalg.LinAlgError as e:
        raise NumericalError(f"Eigendecomposition of the Dirichlet Laplacian failed: {e}") from e

    if s == 1:
        A = lap
    else:
        A = (V * w ** s) @ V.T
        A = 0.5 * (A + A.T)

    phi1 = _positive_sup_normalized(V[:, 0])
    op = DiscreteOperator(
        kind=OperatorKind.SFL, s=float(s), grid=grid, A=A,
        gamma=gamma_of(OperatorKind.SFL, s), lambda1=float(w[0] ** s), phi1=phi1,
    )
    logger.info(f"Built SFL operator: n={grid.n}, s={s}, lambda1={op.lambda1:.6g}")
    return op


def build_rfl(grid: Grid, s: float) -> DiscreteOperator:
    """Restricted fractional Laplacian: hypersingular integral over the whole line."""
    _check_order(OperatorKind.RFL, s)
    A = _assemble_hypersingular(grid, s, exterior=True)
    return _with_eigenpair(OperatorKind.RFL, grid, s, A)


def build_cfl(grid: Grid, s: float) -> DiscreteOperator:
    """Censored fractional Laplacian: principal value restricted to the interval."""
    _check_order(OperatorKind.CFL, s)
    A = _assemble_hypersingular(grid, s, exterior=False)
    return _with_eigenpair(OperatorKind.CFL, grid, s, A)


_BUILDERS = {
    OperatorKind.RFL: build_rfl,
    OperatorKind.SFL: build_sfl,
    OperatorKind.CFL: build_cfl,
}


def build_operator(kind: Any, grid: Grid, s: float) -> DiscreteOperator:
    """Dispatch to the builder of the requested kind."""
    return _BUILDERS[OperatorKind.parse(kind)](grid, s)


def compute_first_eigenpair(op: DiscreteOperator) -> Tuple[float, np.ndarray]:
    """
    Smallest eigenvalue and positive sup-normalized eigenvector of op.A.

    SFL reuses the Laplacian eigenbasis computed at build time; RFL and
    CFL run shifted-at-zero inverse power iteration.
    """
    if op.kind is OperatorKind.SFL:
        return op.lambda1, op.phi1.copy()
    return _inverse_power_iteration(op.A)


def compute_green(op: DiscreteOperator) -> GreenMatrix:
    """Factorize A and form its dense inverse."""
    try:
        factor = linalg.cho_factor(op.A)
    except linalg.LinAlgError as e:
        raise NumericalError(f"Cholesky factorization of the {op.kind.value} matrix failed: {e}") from e
    G = linalg.cho_solve(factor, np.eye(op.grid.n))
    G = 0.5 * (G + G.T)
    logger.info(f"Green matrix ready: kind={op.kind.value}, n={op.grid.n}, max G={G.max():.6g}")
    return GreenMatrix(op=op, G=G, factor=factor)


def _check_order(kind: OperatorKind, s: float):
    if kind is OperatorKind.CFL:
        if not 0.5 < s < 1:
            raise DomainError("CFL defined for 1/2 < s < 1")
    elif kind is OperatorKind.SFL:
        if not 0 < s <= 1:
            raise DomainError(f"SFL defined for 0 < s <= 1, got s={s}")
    elif not 0 < s < 1:
        raise DomainError(f"RFL defined for 0 < s < 1, got s={s}")


def _rational(value: float) -> Fraction:
    return Fraction(value).limit_denominator(10 ** 6)


def _positive_sup_normalized(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.sum() < 0:
        v = -v
    v = v / np.max(np.abs(v))
    if np.any(v <= 0):
        raise NumericalError("First eigenvector is not strictly positive")
    return v


def _with_eigenpair(kind: OperatorKind, grid: Grid, s: float, A: np.ndarray) -> DiscreteOperator:
    lambda1, phi1 = _inverse_power_iteration(A)
    op = DiscreteOperator(
        kind=kind, s=float(s), grid=grid, A=A,
        gamma=gamma_of(kind, s), lambda1=lambda1, phi1=phi1,
    )
    logger.info(f"Built {kind.value} operator: n={grid.n}, s={s}, lambda1={lambda1:.6g}")
    return op


def _inverse_power_iteration(A: np.ndarray, tol: float = EIGEN_TOL,
                             max_iter: int = EIGEN_MAX_ITER) -> Tuple[float, np.ndarray]:
    """
    Inverse iteration with shift 0.

    Converged once the residual is below tol*||A||_inf; a few more sweeps
    run until the residual stops decreasing.
    """
    try:
        factor = linalg.cho_factor(A)
    except linalg.LinAlgError as e:
        raise NumericalError(f"Operator matrix is not positive definite: {e}") from e

    a_norm = np.abs(A).sum(axis=1).max()
    v = np.ones(A.shape[0]) / math.sqrt(A.shape[0])
    lam = 0.0
    prev_res = math.inf
    reached_at = None
    for it in range(1, max_iter + 1):
        w = linalg.cho_solve(factor, v)
        v_new = w / np.linalg.norm(w)
        Av = A @ v_new
        lam_new = float(v_new @ Av)
        res = float(np.abs(Av - lam_new * v_new).max())
        if reached_at is not None and (res >= prev_res or it - reached_at >= EIGEN_POLISH_ITER):
            break
        v, lam, prev_res = v_new, lam_new, res
        if reached_at is None and res <= tol * a_norm:
            reached_at = it
    if reached_at is None:
        raise NumericalError(
            f"Inverse power iteration did not converge after {max_iter} iterations "
            f"(residual {prev_res:.3e})"
        )
    logger.debug(f"Inverse iteration converged at {reached_at} iterations, residual {prev_res:.3e}")
    return lam, _positive_sup_normalized(v)


def _hat_weights(n: int, s: float) -> np.ndarray:
    """
    Far-field weights omega_d, d = 1..n-1, in units of h^(-2s).

    omega_d is the integral of the hat function centred d cells away against
    |z|^(-1-2s), restricted to |z| >= h; for d = 1 only the outer half counts.
    """
    d = np.arange(1, n, dtype=float)
    falling = (d + 1.0) * _moment_kernel(d, d + 1.0, s) - _moment_linear(d, d + 1.0, s)
    rising = np.zeros_like(d)
    far = d >= 2
    rising[far] = _moment_linear(d[far] - 1.0, d[far], s) - (d[far] - 1.0) * _moment_kernel(d[far] - 1.0, d[far], s)
    return falling + rising


def _moment_kernel(a: np.ndarray, b: np.ndarray, s: float) -> np.ndarray:
    # integral of z^(-1-2s) over [a, b]
    return (a ** (-2.0 * s) - b ** (-2.0 * s)) / (2.0 * s)


def _moment_linear(a: np.ndarray, b: np.ndarray, s: float) -> np.ndarray:
    # integral of z^(-2s) over [a, b]
    if abs(1.0 - 2.0 * s) < 1e-14:
        return np.log(b / a)
    return (b ** (1.0 - 2.0 * s) - a ** (1.0 - 2.0 * s)) / (1.0 - 2.0 * s)


def _bubble_moments(count: int, s: float) -> np.ndarray:
    """
    b_d = integral over [d, d+1] of (z-d)(d+1-z)/2 * z^(-1-2s), d = 1..count.

    Mean interpolation error of a hat expansion on a cell is -f''/2 times
    this quadratic bubble.
    """
    if count <= 0:
        return np.zeros(0)
    d = np.arange(1, count + 1, dtype=float)[:, None]
    z = d + 0.5 * (_BUBBLE_NODES[None, :] + 1.0)
    bubble = 0.5 * (z - d) * (d + 1.0 - z)
    return 0.5 * (bubble * z ** (-1.0 - 2.0 * s)) @ _BUBBLE_WEIGHTS


def _assemble_hypersingular(grid: Grid, s: float, exterior: bool) -> np.ndarray:
    """
    Quadrature of c_{1,s} P.V. integral of (f(x) - f(y)) |x-y|^(-1-2s) dy.

    The cell pair around x_i uses the Taylor remainder, integrating
    f''|z|^(1-2s) exactly with f'' from the second difference. Cells farther
    out use the piecewise-linear interpolant of f, whose mean error is
    returned to the second-difference weight as exact bubble moments.
    `exterior` adds the closed-form tail over the complement of (-1, 1).
    """
    n, h = grid.n, grid.h
    c = normalization_constant(s)
    scale = c * h ** (-2.0 * s)
    omega = _hat_weights(n, s)

    A = -scale * linalg.toeplitz(np.concatenate(([0.0], omega)))

    i = np.arange(1, n + 1, dtype=float)
    right = n + 1.0 - i
    left = i
    diag = ((1.0 - right ** (-2.0 * s)) + (1.0 - left ** (-2.0 * s))) / (2.0 * s)

    # second-difference weight per node, corrected by the far-cell bias
    cum = np.concatenate(([0.0], np.cumsum(_bubble_moments(n - 1, s))))
    idx = np.arange(n)
    eta_node = 1.0 / (2.0 - 2.0 * s) - (cum[n - 1 - idx] + cum[idx])
    eta_edge = np.maximum(0.5 * (eta_node[:-1] + eta_node[1:]), -omega[0]) if n > 1 else np.zeros(0)
    A[idx[:-1], idx[:-1] + 1] -= scale * eta_edge
    A[idx[:-1] + 1, idx[:-1]] -= scale * eta_edge
    diag[:-1] += eta_edge
    diag[1:] += eta_edge
    # edges to the boundary nodes, where f vanishes
    diag[0] += max(eta_node[0], 0.0)
    diag[-1] += max(eta_node[-1], 0.0)

    A[idx, idx] = scale * diag
    if exterior:
        x = grid.nodes
        A[idx, idx] += c * ((1.0 - x) ** (-2.0 * s) + (1.0 + x) ** (-2.0 * s)) / (2.0 * s)
    return A
