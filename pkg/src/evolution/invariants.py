"""
Trace invariants: irreversibility, the discrete ess-sup identity and admissibility

The checks run on plain arrays (knots × interface nodes) so they apply both to
an in-memory trace and to a stored interface history.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from config.settings import ADMISSIBILITY_TOLERANCE, ESSSUP_TOLERANCE

logger = logging.getLogger(__name__)


@dataclass
class InvariantResult:
    """Outcome of one invariant check; ``knot``/``node`` locate the worst violation"""

    name: str
    passed: bool
    worst: float = 0.0
    knot: Optional[int] = None
    node: Optional[int] = None

    @property
    def message(self) -> str:
        if self.passed:
            return f"{self.name}: ok (worst {self.worst:.3e})"
        return f"{self.name}: violated at knot {self.knot}, interface node {self.node} (by {self.worst:.3e})"

    def to_dict(self) -> Dict:
        return {"name": self.name, "passed": self.passed, "worst": self.worst,
                "knot": self.knot, "node": self.node}


def _as_history(values) -> np.ndarray:
    history = np.asarray(values, dtype=float)
    if history.ndim == 1:
        history = history[:, None]
    return history


def _locate(name: str, excess: np.ndarray, passed: bool) -> InvariantResult:
    if excess.size == 0:
        return InvariantResult(name=name, passed=True)
    knot, node = np.unravel_index(int(np.argmax(excess)), excess.shape)
    return InvariantResult(name=name, passed=passed, worst=float(excess[knot, node]),
                           knot=int(knot), node=int(node))


def check_irreversibility(gammas) -> InvariantResult:
    """γⁱ ≥ γⁱ⁻¹ at every interface node, no tolerance"""
    history = _as_history(gammas)
    if history.shape[0] < 2:
        return InvariantResult(name="irreversibility", passed=True)
    decrease = np.zeros_like(history)
    decrease[1:] = history[:-1] - history[1:]
    result = _locate("irreversibility", decrease, passed=bool(np.all(decrease <= 0.0)))
    if result.passed:
        result.worst = 0.0
    return result


def check_esssup_identity(gammas, phis, tol: float = ESSSUP_TOLERANCE) -> InvariantResult:
    """
    γⁱ = γ⁰ ∨ max_{j≤i} φ([uʲ]) at every knot and interface node

    The tolerance is relative to 1 + |γ|.
    """
    history = _as_history(gammas)
    phi_history = _as_history(phis)
    if history.shape != phi_history.shape:
        raise ValueError(f"gamma history {history.shape} and phi history {phi_history.shape} differ in shape")
    expected = np.maximum(history[0][None, :], np.maximum.accumulate(phi_history, axis=0))
    expected[0] = history[0]
    error = np.abs(history - expected) / (1.0 + np.abs(expected))
    return _locate("esssup_identity", error, passed=bool(np.all(error <= tol)))


def check_admissibility(gammas, phis, tol: float = ADMISSIBILITY_TOLERANCE) -> InvariantResult:
    """φ([uⁱ]) ≤ γⁱ at every knot and interface node"""
    history = _as_history(gammas)
    phi_history = _as_history(phis)
    excess = phi_history - history
    result = _locate("admissibility", excess, passed=bool(np.all(excess <= tol)))
    return result


def check_dissipation(increments) -> InvariantResult:
    """Dissipation increments are nonnegative"""
    values = np.asarray(increments, dtype=float).reshape(-1, 1)
    return _locate("dissipation", -values, passed=bool(np.all(values >= 0.0)))


def check_trace(trace) -> List[InvariantResult]:
    """All array invariants of an EvolutionTrace"""
    gammas = np.array(trace.gamma)
    phis = np.array(trace.phi_jump)
    results = [
        check_irreversibility(gammas),
        check_esssup_identity(gammas, phis),
        check_admissibility(gammas, phis),
        check_dissipation([r.dissipation_increment for r in trace.records]),
    ]
    for result in results:
        if not result.passed:
            logger.warning(result.message)
    return results
