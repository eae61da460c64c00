#!/usr/bin/env python3
"""
Figure reproduction bundles

Runs the spectral-operator experiments behind the three boundary-behavior
figures: bump datum, profile of t^(1/(m-1)) u(t) at the probe times
against the comparator power of Phi1. Each (m, s) cell runs in its own
process and is written as plot-ready CSV; the qualitative claims of each
figure are evaluated from exponent fits and written as JSON.

Author: fpme-lab developers
License: MIT
"""

import os
import logging
from dataclasses import dataclass
from multiprocessing import Pool
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from estimates import check_matching_lower, check_universal_lower, exponent_timeseries
from evolution import EvolutionConfig, critical_time, evolve, initial_datum
from kernels import FAIL, PASS
from operators import OperatorKind, build_grid, build_operator, sigma_of
from utils import ConfigError, write_csv, write_json

logger = logging.getLogger(__name__)

EXPONENT_TOL = 0.1
EARLY_FRACTION = 0.05


@dataclass(frozen=True)
class FigureCell:
    """One (m, s) panel: probe times and the power of Phi1 drawn as comparator."""

    label: str
    m: float
    s: float
    probe_times: Tuple[float, ...]
    comparator: str  # "inverse_m" -> Phi1^(1/m), "one_minus_2s" -> Phi1^(1-2s)

    @property
    def comparator_power(self) -> float:
        return 1.0 / self.m if self.comparator == "inverse_m" else 1.0 - 2.0 * self.s


FIGURES: Dict[int, Tuple[FigureCell, ...]] = {
    1: (FigureCell("m2_s0.5", 2.0, 0.5, (1.0, 5.0), "inverse_m"),),
    2: (
        FigureCell("m4_s0.75", 4.0, 0.75, (30.0, 150.0), "inverse_m"),
        FigureCell("m4_s0.2", 4.0, 0.2, (150.0, 600.0), "inverse_m"),
    ),
    3: (FigureCell("m2_s0.1", 2.0, 0.1, (4.0, 25.0, 40.0, 150.0), "one_minus_2s"),),
}


def _run_cell(job: Tuple[int, FigureCell, int, Dict[str, Any]]) -> Dict[str, Any]:
    """Evolve one cell and evaluate its claims (runs in a worker process)."""
    which, cell, n, schedule = job
    grid = build_grid(n)
    op = build_operator(OperatorKind.SFL, grid, cell.s)
    u0 = initial_datum("bump", grid, op)
    t_star = critical_time(u0, op.phi1, cell.m, schedule.get("kappa_star", 1.0), grid)
    cfg = EvolutionConfig(
        m=cell.m,
        dt0=schedule.get("dt0", 1e-3),
        growth=schedule.get("growth", 1.05),
        t_end=max(cell.probe_times),
        probe_times=cell.probe_times,
    )
    traj = evolve(u0, op, cfg)
    alpha = 1.0 / (cell.m - 1.0)
    sigma, _ = sigma_of(cell.s, cell.m, op.gamma)

    early_time = float(traj.times[1])
    series = exponent_timeseries(traj, grid, cell.m, probe_times=(early_time,) + cell.probe_times)
    exponents = {float(t): float(b) for t, b in zip(series.times, series.beta)}

    comparator = op.phi1 ** cell.comparator_power
    columns = {t: traj.times[traj.index_of(t)] ** alpha * traj.snapshots[traj.index_of(t)]
               for t in cell.probe_times}
    claims = _claims(which, cell, op, traj, t_star, sigma, exponents, early_time, comparator, columns)

    return {
        "label": cell.label,
        "m": cell.m,
        "s": cell.s,
        "sigma": sigma,
        "t_star": t_star,
        "early_time": early_time,
        "comparator_power": cell.comparator_power,
        "exponents": exponents,
        "claims": claims,
        "nodes": grid.nodes.copy(),
        "comparator": comparator,
        "columns": columns,
    }


def _claims(which: int, cell: FigureCell, op, traj, t_star: float, sigma: float,
            exponents: Dict[float, float], early_time: float, comparator: np.ndarray,
            columns: Dict[float, np.ndarray]) -> Dict[str, bool]:
    """Qualitative statements each figure makes, as booleans."""
    first, last = cell.probe_times[0], cell.probe_times[-1]
    claims = {}
    if which in (1, 3):
        claims["linear_at_short_times"] = (
            early_time <= EARLY_FRACTION * t_star and abs(exponents[early_time] - 1.0) <= EXPONENT_TOL
        )
    if which == 1:
        claims["matching_at_latest_probe"] = abs(exponents[last] - 1.0 / cell.m) <= EXPONENT_TOL
        claims["matching_lower_bound"] = check_matching_lower(traj, op, cell.m, t_star).passed
    elif which == 2 and sigma >= 1:
        claims["linear_longer_than_matching"] = exponents[first] > exponents[last]
        claims["matching_at_latest_probe"] = abs(exponents[last] - 1.0 / cell.m) <= EXPONENT_TOL
    elif which == 2:
        claims["no_matching_behavior"] = all(b >= sigma / cell.m + EXPONENT_TOL for b in exponents.values())
        claims["universal_lower_bound"] = check_universal_lower(traj, op, cell.m, t_star).passed
    elif which == 3:
        # u / Phi1^(sigma/m) vanishes toward the boundary iff the exponent exceeds sigma/m
        claims["vanishes_against_profile_power"] = all(b > sigma / cell.m for b in exponents.values())
        claims["late_exponent_above_floor"] = exponents[last] >= cell.comparator_power - 0.05
        ratio_first = float(np.max(columns[first] / comparator))
        ratio_last = float(np.max(columns[last] / comparator))
        claims["comparator_exceeded_late"] = ratio_last > 1.0 and ratio_last > ratio_first
    return {k: bool(v) for k, v in claims.items()}


def reproduce_figure(which: int, n: int, out_dir: Path, schedule: Optional[Dict[str, Any]] = None,
                     processes: Optional[int] = None) -> Dict[str, Any]:
    """
    Run every cell of a figure and write its bundle.

    Args:
        which: Figure number (1, 2 or 3).
        n: Interior grid size.
        out_dir: Output directory for CSV and JSON files.
        schedule: Optional overrides for dt0, growth and kappa_star.
        processes: Worker count (defaults to one per cell, capped by CPU count).

    Returns:
        Summary with per-cell exponents, claims and an overall verdict.
    """
    if which not in FIGURES:
        raise ConfigError(f"Unknown figure {which!r} (expected 1, 2 or 3)")
    cells = FIGURES[which]
    jobs = [(which, cell, n, dict(schedule or {})) for cell in cells]
    workers = processes or min(len(cells), os.cpu_count() or 1)
    logger.info(f"Reproducing figure {which}: {len(cells)} cell(s), n={n}, {workers} worker(s)")

    if workers > 1:
        with Pool(processes=workers) as pool:
            results = pool.map(_run_cell, jobs)
    else:
        results = [_run_cell(job) for job in jobs]

    out_dir = Path(out_dir)
    summary_cells: List[Dict[str, Any]] = []
    for result in results:
        probe_times = sorted(result["columns"])
        header = ["x", "comparator"] + [f"v_t{t:g}" for t in probe_times]
        rows = zip(result["nodes"], result["comparator"], *(result["columns"][t] for t in probe_times))
        write_csv(out_dir / f"figure{which}_{result['label']}.csv", header, rows)
        summary_cells.append({k: v for k, v in result.items() if k not in ("nodes", "comparator", "columns")})

    verdict = PASS if all(all(c["claims"].values()) for c in summary_cells) else FAIL
    summary = {"figure": which, "n": n, "cells": summary_cells, "verdict": verdict}
    write_json(out_dir / f"figure{which}_verdicts.json", summary)
    logger.info(f"Figure {which} verdict: {verdict}")
    return summary
