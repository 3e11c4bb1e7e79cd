"""
Time-refinement studies

One base configuration is run on grids of increasing step counts. At each
checkpoint t the piecewise-constant interpolants (value at the greatest knot
≤ t) are compared against the finest level.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from config.run_config import StudyConfig
from config.settings import STUDY_GAP_FLOOR
from src.harness.oracles import OracleReport, oracle_compare
from src.harness.runner import RunResult, run_case
from src.materials.bulk import gradient_distance
from src.utils.parallel import parallel_map

logger = logging.getLogger(__name__)

STUDY_COLUMNS = [
    "level", "checkpoint", "knot_time", "bulk_minus_work", "gamma_norm",
    "gap_bulk_minus_work", "gap_gamma_norm", "field_distance",
    "rate_bulk_minus_work", "rate_gamma_norm", "max_balance_residual", "balance_factor",
    "oracle_max_error",
]


class StudyError(ValueError):
    """Raised for an unusable refinement study"""
    pass


@dataclass
class StudyResult:
    """Study table with the pass/fail verdict"""

    table: pd.DataFrame
    passed: bool
    failures: List[str] = field(default_factory=list)
    oracle_reports: Dict[int, OracleReport] = field(default_factory=dict)


def check_levels(levels: List[int], checkpoints: List[float], horizon: float):
    """
    Raises:
        StudyError: For fewer than three levels, non-increasing levels or a
            checkpoint outside [0, T]
    """
    if len(levels) < 3:
        raise StudyError(f"a refinement study needs at least 3 levels to estimate a rate, got {len(levels)}")
    if any(k < 1 for k in levels) or any(b <= a for a, b in zip(levels, levels[1:])):
        raise StudyError(f"levels must be positive and strictly increasing, got {levels}")
    outside = [c for c in checkpoints if c < 0.0 or c > horizon]
    if outside:
        raise StudyError(f"checkpoints {outside} lie outside [0, {horizon!r}]")


def empirical_rate(coarse_gap: float, fine_gap: float, coarse_level: int, fine_level: int,
                   floor: float) -> float:
    """
    log(gap_coarse / gap_fine) / log(level_fine / level_coarse)

    Returns +inf when the finer gap is below ``floor`` (exact agreement) and
    −inf when only the coarser one is.
    """
    if fine_gap <= floor:
        return np.inf
    if coarse_gap <= floor:
        return -np.inf
    return float(np.log(coarse_gap / fine_gap) / np.log(fine_level / coarse_level))


def _run_level(spec: StudyConfig, level: int) -> RunResult:
    base = spec.base
    cfg = replace(base, time=replace(base.time, steps=level, knots=None))
    return run_case(cfg, diagnostics=False)


def convergence_study(spec: StudyConfig, cap: Optional[int] = None) -> StudyResult:
    """
    Run every refinement level and tabulate gaps, rates and balance residuals

    Levels run concurrently; rows are ordered by level and checkpoint.

    Args:
        spec: Study configuration
        cap: Worker cap (defaults to COHEVO_THREADS)

    Returns:
        StudyResult; ``passed`` requires every rate ≥ min_rate where a gap is
        measurable, every balance factor ≥ min_balance_factor where the finer
        residual is measurable, and every oracle error within tolerance

    Raises:
        StudyError: For fewer than three levels or an illegal checkpoint
        OracleMismatchError: If the oracle does not describe the base case
    """
    levels = list(spec.levels)
    check_levels(levels, spec.checkpoints, spec.base.loads.horizon)
    results = parallel_map(lambda level: _run_level(spec, level), levels, cap)

    oracle_reports = {}
    if spec.oracle != "none":
        for level, result in zip(levels, results):
            p = result.problem
            oracle_reports[level] = oracle_compare(result.trace, spec.oracle, p.mesh, p.model, p.law, p.prog)

    finest = results[-1]
    mesh = finest.problem.mesh
    strictly_convex = finest.problem.model.is_quadratic and finest.problem.law.is_convex
    energy_scale = float(np.abs([r.bulk_minus_work for r in finest.trace.records]).max(initial=0.0))
    floor = STUDY_GAP_FLOOR * (1.0 + energy_scale)

    def sample(result: RunResult, t: float):
        index = result.problem.grid.tau(t)
        record = result.trace.records[index]
        return index, record

    rows = []
    failures = []
    balance = [r.balance.max_residual for r in results]
    for checkpoint in spec.checkpoints:
        f_index, f_record = sample(finest, checkpoint)
        gaps = []
        for level, result in zip(levels, results):
            index, record = sample(result, checkpoint)
            distance = np.nan
            if strictly_convex:
                distance = gradient_distance(mesh, result.trace.u[index], finest.trace.u[f_index])
            gaps.append((abs(record.bulk_minus_work - f_record.bulk_minus_work),
                         abs(record.gamma_norm - f_record.gamma_norm)))
            rows.append({
                "level": level,
                "checkpoint": checkpoint,
                "knot_time": record.time,
                "bulk_minus_work": record.bulk_minus_work,
                "gamma_norm": record.gamma_norm,
                "gap_bulk_minus_work": gaps[-1][0],
                "gap_gamma_norm": gaps[-1][1],
                "field_distance": distance,
            })
        block = rows[-len(levels):]
        # the finest level is the reference; rates between consecutive coarser levels
        for i in range(len(levels) - 2):
            for column, j in (("rate_bulk_minus_work", 0), ("rate_gamma_norm", 1)):
                rate = empirical_rate(gaps[i][j], gaps[i + 1][j], levels[i], levels[i + 1], floor)
                block[i + 1][column] = rate
                if rate < spec.min_rate:
                    failures.append(f"checkpoint {checkpoint!r}: {column} {rate:.3f} < {spec.min_rate} "
                                    f"between levels {levels[i]} and {levels[i + 1]}")

    balance_floor = STUDY_GAP_FLOOR * (1.0 + max(r.balance.peak_energy for r in results))
    factors = [np.nan]
    for coarse, fine in zip(balance, balance[1:]):
        if fine <= balance_floor:
            factors.append(np.inf)
        else:
            factors.append(coarse / fine)
    for level, factor in zip(levels, factors):
        if np.isfinite(factor) and factor < spec.min_balance_factor:
            failures.append(f"balance residual shrinks by {factor:.3f} < {spec.min_balance_factor} at level {level}")

    for row in rows:
        i = levels.index(row["level"])
        row["max_balance_residual"] = balance[i]
        row["balance_factor"] = factors[i]
        report = oracle_reports.get(row["level"])
        row["oracle_max_error"] = report.max_error if report else np.nan
    for level, report in oracle_reports.items():
        if not report.passed():
            failures.append(f"level {level}: {report.oracle} oracle error {report.max_error:.3e} "
                            f"(opening at {report.computed_opening_time}, expected {report.opening_time})")

    table = pd.DataFrame(rows, columns=STUDY_COLUMNS)
    for message in failures:
        logger.warning("study: %s", message)
    logger.info("study over levels %s: %s", levels, "passed" if not failures else f"{len(failures)} failures")
    return StudyResult(table=table, passed=not failures, failures=failures, oracle_reports=oracle_reports)
