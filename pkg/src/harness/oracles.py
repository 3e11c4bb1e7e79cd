"""
Closed-form reference evolutions of the clamped two-bar rod

A rod of length L with modulus μ, clamped at both ends and cut by one
interface point, reduces to a single unknown jump δ: with end displacement
U = ψ(right) − ψ(left) the step energy is μ(U − δ)²/(2L) + w(φ(δ) − γ)⁺.
The recursion below minimizes it knot by knot from the trace's own γ⁰.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from config.settings import ORACLE_TOLERANCE, TIE_TOLERANCE
from src.geometry.mesh import Mesh, jump
from src.loads.program import LoadProgram, boundary_value
from src.materials.bulk import BulkModel
from src.materials.cohesive import CohesiveLaw, phi

logger = logging.getLogger(__name__)

ORACLE_LAWS = {"analytic_1d_linear": "linear", "analytic_1d_griffith": "griffith"}


class OracleMismatchError(ValueError):
    """Raised when a trace does not come from the scenario an oracle describes"""
    pass


@dataclass
class OracleReport:
    """Per-knot comparison of a trace against a closed-form evolution"""

    oracle: str
    frame: pd.DataFrame
    max_sigma_error: float
    max_delta_error: float
    max_gamma_error: float
    opening_time: Optional[float] = None
    computed_opening_time: Optional[float] = None

    @property
    def max_error(self) -> float:
        return max(self.max_sigma_error, self.max_delta_error, self.max_gamma_error)

    def passed(self, tol: float = ORACLE_TOLERANCE) -> bool:
        return self.max_error <= tol and self.opening_time == self.computed_opening_time

    def to_dict(self):
        return {
            "oracle": self.oracle,
            "max_sigma_error": self.max_sigma_error,
            "max_delta_error": self.max_delta_error,
            "max_gamma_error": self.max_gamma_error,
            "opening_time": self.opening_time,
            "computed_opening_time": self.computed_opening_time,
        }


def _check_scenario(oracle: str, mesh: Mesh, model: BulkModel, law: CohesiveLaw, prog: LoadProgram):
    if oracle not in ORACLE_LAWS:
        raise OracleMismatchError(f"unknown oracle {oracle!r}; expected one of {', '.join(ORACLE_LAWS)}")
    reasons = []
    if mesh.dimension != 1 or mesh.field_dimension != 1:
        reasons.append(f"needs a scalar 1D rod, got dimension {mesh.dimension} with {mesh.field_dimension} components")
    pairs = mesh.pairs
    if len(pairs) != 1 or pairs.tied[0]:
        reasons.append(f"needs exactly one interface point, got {len(pairs)}")
    if model.variant != "quadratic_scalar" or np.ndim(model.modulus) != 0:
        reasons.append("needs quadratic_scalar bulk with a uniform modulus")
    if law.variant != ORACLE_LAWS[oracle]:
        reasons.append(f"describes the {ORACLE_LAWS[oracle]} law, run uses {law.variant}")
    if np.ndim(law.a) or np.ndim(law.b):
        reasons.append("needs uniform cohesive parameters")
    if prog.has_loads:
        reasons.append("needs a pure boundary-deformation program (no applied loads)")
    if mesh.dimension == 1:
        x = mesh.nodes[:, 0]
        ends = {int(np.argmin(x)), int(np.argmax(x))}
        if not ends <= set(mesh.dirichlet_nodes.tolist()):
            reasons.append("needs both rod ends clamped")
    if reasons:
        raise OracleMismatchError(f"{oracle}: " + "; ".join(reasons))


def _dead_zone(law: CohesiveLaw, gamma: float) -> float:
    """Largest |δ| with φ(δ) ≤ γ (−1 when only δ = 0 qualifies)"""
    a, b = float(law.a), float(law.b)
    if law.variant == "griffith" and gamma < a:
        return -1.0
    excess = gamma - (a if law.variant == "griffith" else 0.0)
    return np.inf if b == 0.0 else excess / b


def rod_step(law: CohesiveLaw, end_displacement: float, gamma: float,
             length: float, modulus: float = 1.0, weight: float = 1.0) -> float:
    """
    Exact minimizing jump of one rod step

    Candidates are the closed rod, the dead-zone projection and the
    stationary point on the charged branch; ties go to the smaller |δ|.
    """
    U = float(end_displacement)
    sign = 1.0 if U >= 0.0 else -1.0
    radius = _dead_zone(law, gamma)
    b = float(law.b)

    candidates = [0.0]
    if radius > 0.0:
        candidates.append(sign * min(abs(U), radius))
    stationary = abs(U) - b * length / modulus
    if stationary > max(radius, 0.0):
        candidates.append(sign * stationary)

    def energy(delta):
        cost = max(float(phi(law, delta)) - gamma, 0.0)
        return 0.5 * modulus * (U - delta) ** 2 / length + weight * cost

    values = [energy(d) for d in candidates]
    best = min(values)
    admissible = [d for d, v in zip(candidates, values) if v <= best + TIE_TOLERANCE * (1.0 + abs(best))]
    return min(admissible, key=abs)


def oracle_compare(trace, oracle: str, mesh: Mesh, model: BulkModel, law: CohesiveLaw,
                   prog: LoadProgram) -> OracleReport:
    """
    Maximum deviation of σ, δ and γ from the closed-form rod evolution

    Knot 0 only seeds the recursion with the stored γ⁰.

    Raises:
        OracleMismatchError: If the problem is not the scenario of ``oracle``
    """
    _check_scenario(oracle, mesh, model, law, prog)
    x = mesh.nodes[:, 0]
    left, right = int(np.argmin(x)), int(np.argmax(x))
    length = float(x[right] - x[left])
    modulus = float(model.modulus)
    weight = float(mesh.pairs.weights[0])

    rows = []
    gamma_exact = float(trace.gamma[0][0])
    for index in range(1, len(trace.times)):
        t = trace.times[index]
        psi = boundary_value(prog, mesh, t)
        U = float(psi[right, 0] - psi[left, 0])
        delta_exact = rod_step(law, U, gamma_exact, length, modulus, weight)
        gamma_exact = max(gamma_exact, float(phi(law, delta_exact)))
        u = trace.u[index]
        rows.append({
            "time": t,
            "sigma": modulus * float(mesh.field_gradient(u)[0, 0, 0]),
            "sigma_exact": modulus * (U - delta_exact) / length,
            "delta": float(jump(mesh, u)[0, 0]),
            "delta_exact": delta_exact,
            "gamma": float(trace.gamma[index][0]),
            "gamma_exact": gamma_exact,
        })
    frame = pd.DataFrame(rows, columns=["time", "sigma", "sigma_exact", "delta", "delta_exact",
                                        "gamma", "gamma_exact"])

    def worst(column):
        if frame.empty:
            return 0.0
        return float((frame[column] - frame[f"{column}_exact"]).abs().max())

    def first_open(column):
        opened = frame.loc[frame[column].abs() > ORACLE_TOLERANCE, "time"]
        return None if opened.empty else float(opened.iloc[0])

    report = OracleReport(
        oracle=oracle,
        frame=frame,
        max_sigma_error=worst("sigma"),
        max_delta_error=worst("delta"),
        max_gamma_error=worst("gamma"),
        opening_time=first_open("delta_exact"),
        computed_opening_time=first_open("delta"),
    )
    logger.info("%s oracle: max errors sigma %.3e, delta %.3e, gamma %.3e",
                oracle, report.max_sigma_error, report.max_delta_error, report.max_gamma_error)
    return report
