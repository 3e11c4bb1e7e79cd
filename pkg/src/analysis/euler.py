"""
Euler conditions of a stable configuration

Recovers the discrete interface traction h from the equilibrium residual and
tests the equilibrium equations off the crack together with the conditions on
the active set A, the closed set B and the remaining interface nodes.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from config.settings import EULER_TOLERANCE, REGION_TOLERANCE
from src.geometry.mesh import Mesh, jump
from src.loads.program import LoadProgram, load_covector
from src.materials.bulk import BulkModel, MaterialError, bulk_gradient
from src.materials.cohesive import CohesiveLaw, phi, phi_tilde_gradient, psi_tilde

logger = logging.getLogger(__name__)

REGIONS = ("A", "B", "D", "other")
DIRECTION_SAMPLES = 64


class EulerError(ValueError):
    """Raised when a check is requested for an unsupported law or bulk model"""
    pass


@dataclass
class EulerReport:
    """Traction, region labels and the worst residual of every Euler condition"""

    time: float
    traction: np.ndarray
    labels: np.ndarray
    multipliers: np.ndarray
    interior_residual: float = 0.0
    action_reaction_residual: float = 0.0
    condition_a: float = 0.0
    condition_b: float = 0.0
    condition_c: float = 0.0
    example: Optional[Dict[str, float]] = None
    tolerance: float = EULER_TOLERANCE
    skipped: int = 0

    def residuals(self) -> Dict[str, float]:
        values = {
            "interior": self.interior_residual,
            "action_reaction": self.action_reaction_residual,
            "condition_a": self.condition_a,
            "condition_b": self.condition_b,
            "condition_c": self.condition_c,
        }
        for key, value in (self.example or {}).items():
            values[f"example_{key}"] = value
        return values

    @property
    def worst(self) -> float:
        return max(self.residuals().values())

    @property
    def passed(self) -> bool:
        return self.worst <= self.tolerance

    def to_dict(self) -> Dict:
        return {
            "time": self.time,
            "traction": self.traction.tolist(),
            "labels": self.labels.tolist(),
            "multipliers": [None if np.isnan(v) else float(v) for v in self.multipliers],
            "residuals": self.residuals(),
            "worst": self.worst,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "skipped": self.skipped,
        }


def _equilibrium_residual(mesh: Mesh, model: BulkModel, prog: LoadProgram, t: float, u) -> np.ndarray:
    """ρ = ∂𝒲 covector − L(t), zero at free nodes off the crack for an equilibrium field"""
    return bulk_gradient(model, mesh, u) - load_covector(prog, mesh, t)


def recover_traction(mesh: Mesh, model: BulkModel, prog: LoadProgram, t: float, u) -> np.ndarray:
    """
    Consistent interface traction, one vector per interface node

    h = −ρ⊕/w at the ⊕ copy; when that copy is clamped the ⊖ copy gives
    h = ρ⊖/w. Pairs with both copies clamped get NaN.

    Returns:
        Array of shape (P, m), the force of the ⊕ lip on the ⊖ lip per unit area
    """
    rho = _equilibrium_residual(mesh, model, prog, t, u)
    pairs = mesh.pairs
    clamped = mesh.dirichlet_mask
    weights = pairs.weights[:, None]
    traction = -rho[pairs.plus] / weights
    from_minus = clamped[pairs.plus] & ~clamped[pairs.minus]
    traction[from_minus] = rho[pairs.minus[from_minus]] / weights[from_minus]
    both = clamped[pairs.plus] & clamped[pairs.minus]
    traction[both] = np.nan
    return traction


def classify_regions(law: CohesiveLaw, jumps, gamma, tol: float = REGION_TOLERANCE) -> np.ndarray:
    """
    Region label of every interface node

    A: 0 < φ([u]) = γ; B: φ([u]) = 0 and γ = φ₀; D: γ < φ₀; other elsewhere.
    Comparisons use ``tol`` relative to 1 + |γ|.
    """
    jumps = np.asarray(jumps, dtype=float)
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    if jumps.ndim == 1:
        jumps = jumps[:, None]
    phis = phi(law, jumps)
    floor = np.broadcast_to(law.activation, gamma.shape)
    slack = tol * (1.0 + np.abs(gamma))
    labels = np.full(gamma.shape, "other", dtype=object)
    active = (phis > slack) & (np.abs(phis - gamma) <= slack)
    closed = (phis <= slack) & (np.abs(gamma - floor) <= slack)
    below = gamma < floor - slack
    labels[below] = "D"
    labels[closed & ~below] = "B"
    labels[active] = "A"
    return labels.astype(str)


def _directions(m: int) -> np.ndarray:
    if m == 1:
        return np.array([[1.0], [-1.0]])
    angles = 2.0 * np.pi * np.arange(DIRECTION_SAMPLES) / DIRECTION_SAMPLES
    return np.stack([np.cos(angles), np.sin(angles)], axis=1)


def _example_residuals(law: CohesiveLaw, traction: np.ndarray, jumps: np.ndarray, gamma: np.ndarray,
                       valid: np.ndarray) -> Dict[str, float]:
    """Explicit scalar conditions: |h| ≤ b; h = 0 where b|[u]| < γ; h[u] ≥ 0 where b|[u]| = γ"""
    h = traction[:, 0]
    y = jumps[:, 0]
    b = np.broadcast_to(np.asarray(law.b, dtype=float), h.shape)
    density = b * np.abs(y)
    bounded = np.where(valid, np.abs(h) - b, -np.inf)
    below = valid & (density < gamma - REGION_TOLERANCE)
    on = valid & (np.abs(density - gamma) <= REGION_TOLERANCE)
    return {
        "bound": float(max(bounded.max(initial=0.0), 0.0)),
        "free": float(np.abs(h[below]).max(initial=0.0)),
        "sign": float(np.maximum(-(h[on] * y[on]) - REGION_TOLERANCE, 0.0).max(initial=0.0)),
    }


def euler_residuals(mesh: Mesh,
                    model: BulkModel,
                    law: CohesiveLaw,
                    prog: LoadProgram,
                    t: float,
                    u,
                    gamma,
                    example_mode: bool = False,
                    tol: float = EULER_TOLERANCE) -> EulerReport:
    """
    Residuals of the Euler conditions at one configuration

    Args:
        mesh, model, law, prog: Problem data
        t: Time of the configuration
        u: Field of shape (N, m) or flat
        gamma: Internal variable (InternalVariable or per-node values)
        example_mode: Also check the explicit scalar conditions (m = 1,
            quadratic_scalar bulk, linear law)
        tol: Pass threshold of the report

    Returns:
        EulerReport; non-optimal fields give positive residuals, never an exception

    Raises:
        EulerError: For example mode on an unsupported problem, or a law without ψ̃
    """
    if example_mode and (mesh.field_dimension != 1 or model.variant != "quadratic_scalar"
                         or law.variant != "linear"):
        raise EulerError(
            "the explicit scalar conditions need m = 1, quadratic_scalar bulk and the linear law; "
            f"got m = {mesh.field_dimension}, {model.variant} bulk, {law.variant} law"
        )
    gamma = np.asarray(getattr(gamma, "values", gamma), dtype=float).reshape(-1)
    u = mesh.as_field(u)
    m = mesh.field_dimension
    pairs = mesh.pairs

    rho = _equilibrium_residual(mesh, model, prog, t, u)
    free = ~mesh.dirichlet_mask
    off_crack = free.copy()
    open_index = pairs.open_indices
    off_crack[pairs.plus[open_index]] = False
    off_crack[pairs.minus[open_index]] = False
    interior = float(np.abs(rho[off_crack]).max(initial=0.0))

    both_free = free[pairs.plus] & free[pairs.minus]
    both_free[pairs.tied] = False
    reaction = np.abs(rho[pairs.plus] + rho[pairs.minus]) / pairs.weights[:, None]
    action_reaction = float(reaction[both_free].max(initial=0.0))

    traction = recover_traction(mesh, model, prog, t, u)
    valid = ~np.isnan(traction).any(axis=1)
    jumps = jump(mesh, u)
    labels = classify_regions(law, jumps, gamma)
    multipliers = np.full(len(pairs), np.nan)

    condition_a = 0.0
    slope = phi_tilde_gradient(law, jumps)
    active = valid & (labels == "A")
    for e in np.flatnonzero(active):
        g = slope[e]
        size = float(g @ g)
        if size == 0.0:
            continue
        lam = float(traction[e] @ g) / size
        multipliers[e] = lam
        off_segment = max(-lam, lam - 1.0, 0.0) * np.sqrt(size)
        off_line = float(np.linalg.norm(traction[e] - lam * g))
        condition_a = max(condition_a, off_segment, off_line)

    condition_b = 0.0
    closed = valid & (labels == "B")
    if closed.any():
        directions = _directions(m)
        try:
            for y in directions:
                stacked = np.broadcast_to(y, (len(pairs), m))
                excess = traction @ y - psi_tilde(law, stacked)
                condition_b = max(condition_b, float(np.max(excess[closed], initial=0.0)))
        except MaterialError as exc:
            raise EulerError(str(exc)) from exc

    other = valid & (labels == "other")
    condition_c = float(np.linalg.norm(traction[other], axis=1).max(initial=0.0))

    example = _example_residuals(law, traction, jumps, gamma, valid) if example_mode else None

    report = EulerReport(
        time=t,
        traction=traction,
        labels=labels,
        multipliers=multipliers,
        interior_residual=interior,
        action_reaction_residual=action_reaction,
        condition_a=condition_a,
        condition_b=condition_b,
        condition_c=condition_c,
        example=example,
        tolerance=tol,
        skipped=int((~valid).sum()),
    )
    if not report.passed:
        logger.warning("Euler residuals at t=%.6g exceed %.1e: %s", t, tol, report.residuals())
    return report
