"""
Energy balance ledger of a trace

residual(t) = E(t) − E(0) − ∫₀ᵗ θ ds with the integral taken by the trapezoid
rule on the trace knots. The lower energy inequality asks residual ≥ −tol,
where tol is twice the trapezoid error bound Σ ½|θⱼ − θⱼ₋₁|Δtⱼ.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Union

import numpy as np
import pandas as pd

from config.settings import BALANCE_RELATIVE_TOLERANCE

logger = logging.getLogger(__name__)

BALANCE_COLUMNS = ["time", "total", "theta", "work_integral", "residual", "lower_tolerance", "lower_ok"]


@dataclass
class BalanceReport:
    """Per-knot balance table and its summary"""

    frame: pd.DataFrame
    max_residual: float
    peak_energy: float
    upper_estimate: float
    lower_ok: bool
    summary: Dict = field(default_factory=dict)

    @property
    def relative_residual(self) -> float:
        if self.peak_energy == 0.0:
            return 0.0 if self.max_residual == 0.0 else np.inf
        return self.max_residual / self.peak_energy

    def passed(self, relative_tolerance: float = BALANCE_RELATIVE_TOLERANCE) -> bool:
        """Relative residual within tolerance and the lower inequality intact"""
        return self.lower_ok and self.max_residual <= relative_tolerance * self.peak_energy + 1e-12


def energy_balance_report(trace: Union["EvolutionTrace", pd.DataFrame]) -> BalanceReport:
    """
    Balance residuals at every knot of a trace

    Args:
        trace: EvolutionTrace, or a trace table with ``time``, ``total`` and
            ``theta`` columns

    Returns:
        BalanceReport; ``upper_estimate`` is the largest E(t) − E(0) − ∫θ,
        the measured counterpart of the discrete upper energy estimate
    """
    frame = trace if isinstance(trace, pd.DataFrame) else trace.to_frame()
    times = frame["time"].to_numpy(dtype=float)
    totals = frame["total"].to_numpy(dtype=float)
    thetas = frame["theta"].to_numpy(dtype=float)

    dt = np.diff(times)
    work = np.concatenate([[0.0], np.cumsum(0.5 * (thetas[1:] + thetas[:-1]) * dt)])
    error_bound = np.concatenate([[0.0], np.cumsum(0.5 * np.abs(thetas[1:] - thetas[:-1]) * dt)])
    residual = totals - totals[0] - work
    lower_tolerance = 2.0 * error_bound
    lower_ok = residual >= -lower_tolerance - 1e-12 * (1.0 + np.abs(totals))

    table = pd.DataFrame({
        "time": times,
        "total": totals,
        "theta": thetas,
        "work_integral": work,
        "residual": residual,
        "lower_tolerance": lower_tolerance,
        "lower_ok": lower_ok,
    }, columns=BALANCE_COLUMNS)

    report = BalanceReport(
        frame=table,
        max_residual=float(np.abs(residual).max(initial=0.0)),
        peak_energy=float(np.abs(totals).max(initial=0.0)),
        upper_estimate=float(residual.max(initial=0.0)),
        lower_ok=bool(lower_ok.all()),
    )
    report.summary = {
        "max_residual": report.max_residual,
        "peak_energy": report.peak_energy,
        "relative_residual": report.relative_residual,
        "upper_estimate": report.upper_estimate,
        "lower_ok": report.lower_ok,
    }
    if not report.lower_ok:
        first = int(np.argmin(lower_ok))
        logger.warning("lower energy inequality fails at t=%.6g (residual %.3e, tolerance %.3e)",
                       times[first], residual[first], lower_tolerance[first])
    logger.info("energy balance: max residual %.3e, peak energy %.3e", report.max_residual, report.peak_energy)
    return report
