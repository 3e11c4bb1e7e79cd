"""
State model: internal variable, configurations, total energy and stability certificates
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.sparse.linalg import splu

from config.settings import ADMISSIBILITY_TOLERANCE, STABILITY_TOLERANCE
from src.geometry.mesh import Mesh, jump
from src.loads.program import LoadProgram, boundary_value, load_apply, load_covector
from src.materials.bulk import BulkModel, bulk_energy, stiffness_matrix
from src.materials.cohesive import CohesiveLaw, increment_cost, phi, phi_radial

logger = logging.getLogger(__name__)


class AdmissibilityError(ValueError):
    """Raised when a field violates the boundary deformation or a value is illegal"""
    pass


class IrreversibilityError(ValueError):
    """Raised when the internal variable decreases"""
    pass


@dataclass
class InternalVariable:
    """Internal variable γ ≥ 0 on the interface nodes, with the lumped weights of M"""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if self.values.shape != self.weights.shape:
            raise AdmissibilityError(
                f"gamma has {self.values.size} values for {self.weights.size} interface nodes"
            )
        if np.any(~np.isfinite(self.values)) or np.any(self.values < 0.0):
            raise AdmissibilityError("gamma must be finite and >= 0 at every interface node")

    @classmethod
    def uniform(cls, mesh: Mesh, value: float = 0.0) -> "InternalVariable":
        weights = mesh.pairs.weights
        return cls(values=np.full(weights.shape, float(value)), weights=weights)

    @property
    def norm1(self) -> float:
        """‖γ‖₁ on M"""
        return float(np.dot(self.weights, self.values))

    def copy(self) -> "InternalVariable":
        return InternalVariable(values=self.values.copy(), weights=self.weights)


@dataclass
class Configuration:
    """A deformation u together with the internal variable γ at time t"""

    u: np.ndarray
    gamma: InternalVariable
    t: float = 0.0


@dataclass(frozen=True)
class EnergyBreakdown:
    """Components of E(t)(u, γ) = 𝒲(∇u) − ⟨L(t),u⟩ + ‖γ‖₁"""

    bulk: float
    load_work: float
    crack_term: float
    total: float

    @property
    def bulk_minus_work(self) -> float:
        return self.bulk - self.load_work

    def to_dict(self) -> Dict[str, float]:
        return {
            "bulk": self.bulk,
            "load_work": self.load_work,
            "crack_term": self.crack_term,
            "total": self.total,
        }


@dataclass(frozen=True)
class AdmissibilityReport:
    admissible: bool
    max_cohesive_excess: float
    max_dirichlet_error: float


@dataclass
class StabilityReport:
    """Sampled global-stability certificate.

    Only finitely many competitors are tested, so a pass is a necessary
    condition for global stability, never a proof of it.
    """

    time: float
    max_violation: float
    n_competitors: int
    tolerance: float
    violations: List[float] = field(default_factory=list)
    note: str = "sampled certificate: necessary condition only"

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tolerance

    def to_dict(self) -> Dict:
        return {
            "time": self.time,
            "max_violation": self.max_violation,
            "n_competitors": self.n_competitors,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "note": self.note,
        }


@dataclass(frozen=True)
class AprioriBounds:
    """Data-only bounds on the incremental minimizers of a run"""

    available: bool
    stored_minus_work_cap: float = np.inf
    energy_norm_cap: float = np.inf
    gamma_cap: float = np.inf
    reason: str = ""

    def to_dict(self) -> Dict:
        return {
            "available": self.available,
            "stored_minus_work_cap": self.stored_minus_work_cap,
            "energy_norm_cap": self.energy_norm_cap,
            "gamma_cap": self.gamma_cap,
            "reason": self.reason,
        }


def total_energy(cfg: Configuration,
                 model: BulkModel,
                 law: CohesiveLaw,
                 prog: LoadProgram,
                 mesh: Mesh) -> EnergyBreakdown:
    """
    Total energy E(t)(u, γ) = 𝒲(∇u) − ⟨L(t),u⟩ + ‖γ‖₁

    The energy is defined for any configuration; admissibility is checked
    separately by ``is_admissible``.
    """
    bulk = bulk_energy(model, mesh, cfg.u)
    work = load_apply(prog, mesh, cfg.t, cfg.u)
    crack = cfg.gamma.norm1
    return EnergyBreakdown(bulk=bulk, load_work=work, crack_term=crack, total=bulk - work + crack)


def join(gamma: InternalVariable, other) -> InternalVariable:
    """Pointwise maximum γ ∨ other"""
    other = np.broadcast_to(np.asarray(other, dtype=float), gamma.values.shape)
    return InternalVariable(values=np.maximum(gamma.values, other), weights=gamma.weights)


def dissipation_distance(g1: InternalVariable, g2: InternalVariable) -> float:
    """
    ‖g2 − g1‖₁ on M for g2 ≥ g1

    Raises:
        IrreversibilityError: If g2 < g1 at some interface node
    """
    decrease = g1.values - g2.values
    if np.any(decrease > 0.0):
        node = int(np.argmax(decrease))
        raise IrreversibilityError(
            f"internal variable decreases at interface node {node} by {float(decrease[node]):.3e}"
        )
    return float(np.dot(g1.weights, g2.values - g1.values))


def is_admissible(cfg: Configuration,
                  law: CohesiveLaw,
                  prog: LoadProgram,
                  mesh: Mesh,
                  tol: float = ADMISSIBILITY_TOLERANCE) -> AdmissibilityReport:
    """Membership of u in AD(ψ(t), γ): φ([u]) ≤ γ on M and u = ψ(t) on ∂₀Ω"""
    u = mesh.as_field(cfg.u)
    excess = phi(law, jump(mesh, u)) - cfg.gamma.values
    max_excess = float(excess.max(initial=-np.inf)) if excess.size else 0.0
    psi = boundary_value(prog, mesh, cfg.t)
    nodes = mesh.dirichlet_nodes
    dirichlet_error = float(np.abs(u[nodes] - psi[nodes]).max(initial=0.0))
    scale = 1.0 + float(np.abs(psi[nodes]).max(initial=0.0))
    return AdmissibilityReport(
        admissible=max_excess <= tol and dirichlet_error <= 1e-12 * scale,
        max_cohesive_excess=max_excess,
        max_dirichlet_error=dirichlet_error,
    )


def stability_check(cfg: Configuration,
                    competitors: Sequence[np.ndarray],
                    model: BulkModel,
                    law: CohesiveLaw,
                    prog: LoadProgram,
                    mesh: Mesh,
                    tol: float = STABILITY_TOLERANCE) -> StabilityReport:
    """
    Sampled test of 𝒲(∇u) − ⟨L,u⟩ ≤ 𝒲(∇v) − ⟨L,v⟩ + ‖(φ([v]) − γ)⁺‖₁

    Args:
        cfg: Configuration (u, γ) at time t
        competitors: Fields v satisfying v = ψ(t) on ∂₀Ω
        model, law, prog, mesh: Problem data
        tol: Allowed violation

    Returns:
        StabilityReport with the largest lhs − rhs over the competitors

    Raises:
        AdmissibilityError: If a competitor violates the boundary deformation
    """
    psi = boundary_value(prog, mesh, cfg.t)
    nodes = mesh.dirichlet_nodes
    scale = 1.0 + float(np.abs(psi[nodes]).max(initial=0.0))
    lhs = bulk_energy(model, mesh, cfg.u) - load_apply(prog, mesh, cfg.t, cfg.u)
    weights = cfg.gamma.weights

    violations = []
    for index, v in enumerate(competitors):
        v = mesh.as_field(v)
        error = float(np.abs(v[nodes] - psi[nodes]).max(initial=0.0))
        if error > 1e-12 * scale:
            raise AdmissibilityError(
                f"competitor {index} differs from the boundary deformation by {error:.3e} on the Dirichlet part"
            )
        cost = float(np.dot(weights, increment_cost(law, jump(mesh, v), cfg.gamma.values)))
        rhs = bulk_energy(model, mesh, v) - load_apply(prog, mesh, cfg.t, v) + cost
        violations.append(lhs - rhs)

    worst = max(violations) if violations else 0.0
    report = StabilityReport(time=cfg.t, max_violation=worst, n_competitors=len(violations),
                             tolerance=tol, violations=violations)
    if not report.passed:
        logger.warning("stability certificate failed at t=%.6g: violation %.3e", cfg.t, worst)
    return report


def random_competitors(cfg: Configuration,
                       mesh: Mesh,
                       prog: LoadProgram,
                       n: int,
                       rng: np.random.Generator,
                       amplitudes: Sequence[float] = (1e-3, 1e-2, 1e-1)) -> List[np.ndarray]:
    """
    Seeded competitor fields for ``stability_check``

    The first competitor is the lifted boundary deformation ψ(t); the others
    are u + r with Gaussian r of cycling amplitude, zeroed on ∂₀Ω.
    """
    u = mesh.as_field(cfg.u)
    competitors = [boundary_value(prog, mesh, cfg.t)] if n > 0 else []
    for i in range(1, n):
        amplitude = amplitudes[i % len(amplitudes)]
        perturbation = amplitude * rng.standard_normal(u.shape)
        perturbation[mesh.dirichlet_nodes] = 0.0
        competitors.append(u + perturbation)
    return competitors


def apriori_bounds(mesh: Mesh,
                   model: BulkModel,
                   law: CohesiveLaw,
                   prog: LoadProgram,
                   times: Sequence[float],
                   gamma0: InternalVariable) -> AprioriBounds:
    """
    Bounds on bulk-minus-work, the energy norm and ‖γ‖₁ along a run

    Comparing each incremental minimizer with the lifted ψ(tⁱ) gives
    𝒲(∇uⁱ) − ⟨Lⁱ,uⁱ⟩ ≤ max_t [𝒲(∇ψ(t)) − ⟨L(t),ψ(t)⟩]. For quadratic bulk
    energies this caps the distance to the elastic solution in the energy
    norm, hence every jump, hence γ through the monotone radial law.

    The elastic solution u* is taken with the crack free to open, so a
    jump bound starts from the full opening of u*: on a rod pulled apart
    by its ends it is the end displacement plus the energy-norm slack.

    Returns:
        AprioriBounds (unavailable for non-quadratic bulk energies)
    """
    if not model.is_quadratic:
        return AprioriBounds(available=False, reason=f"{model.variant} bulk energy is not quadratic")

    stiffness = stiffness_matrix(model, mesh)
    free, fixed = mesh.dof_partition()
    k_ff = stiffness[free][:, free].tocsc()
    k_fd = stiffness[free][:, fixed]
    lu = splu(k_ff) if free.size else None

    m = mesh.field_dimension
    pairs = mesh.pairs
    open_pairs = pairs.open_indices
    position = -np.ones(mesh.n_dofs, dtype=int)
    position[free] = np.arange(free.size)
    spread = np.zeros(len(pairs))
    for j in open_pairs:
        total = 0.0
        for comp in range(m):
            e = np.zeros(free.size)
            p, q = position[pairs.plus[j] * m + comp], position[pairs.minus[j] * m + comp]
            if p >= 0:
                e[p] += 1.0
            if q >= 0:
                e[q] -= 1.0
            if e.any():
                total += float(e @ lu.solve(e))
        spread[j] = np.sqrt(total)

    caps, elastic = [], []
    for t in times:
        psi = boundary_value(prog, mesh, t).ravel()
        ell = load_covector(prog, mesh, t).ravel()
        caps.append(0.5 * psi @ (stiffness @ psi) - ell @ psi)
        u_star = psi.copy()
        if free.size:
            u_star[free] = lu.solve(ell[free] - k_fd @ psi[fixed])
        elastic.append(u_star)
    cap = float(max(caps))

    norm_cap = 0.0
    radius = np.zeros(len(pairs))
    for t, u_star in zip(times, elastic):
        ell = load_covector(prog, mesh, t).ravel()
        minimum = 0.5 * u_star @ (stiffness @ u_star) - ell @ u_star
        distance = np.sqrt(2.0 * max(cap - minimum, 0.0))
        norm_cap = max(norm_cap, float(np.sqrt(max(u_star @ (stiffness @ u_star), 0.0))) + distance)
        jump_star = np.linalg.norm(jump(mesh, u_star), axis=-1)
        radius = np.maximum(radius, jump_star + spread * distance)
    radius[pairs.tied] = 0.0
    gamma_bound = np.maximum(gamma0.values, phi_radial(law, radius))
    bounds = AprioriBounds(
        available=True,
        stored_minus_work_cap=cap,
        energy_norm_cap=norm_cap,
        gamma_cap=float(np.dot(pairs.weights, gamma_bound)),
    )
    logger.info("a-priori bounds: %s", bounds.to_dict())
    return bounds
