"""
Incremental minimization: one time step of the discrete evolution

Minimizes 𝒲(∇u) − ⟨L(t),u⟩ + ‖φ([u]) ∨ γ‖₁ over u = ψ(t) on ∂₀Ω. Up to the
constant ‖γ‖₁ the interface term is Σ wₑ(φ([u]ₑ) − γₑ)⁺, which is separable
per interface pair, so the composite proximal map is available in closed form.
"""

import logging
from dataclasses import asdict, dataclass, replace
from typing import Dict, Optional, Tuple

import numpy as np

from src.geometry.mesh import Mesh
from src.loads.program import LoadProgram, boundary_value, load_covector
from src.materials.bulk import BulkModel, bulk_energy, bulk_gradient, stiffness_matrix
from src.materials.cohesive import CohesiveLaw, increment_cost, prox_increment
from src.models.state import InternalVariable
from src.solver.schur import SchurOperator, SolverError, coordinate_descent

logger = logging.getLogger(__name__)

ALGORITHMS = ("proximal_gradient_accelerated", "schur_coordinate_descent")
POLISH_STEP_FACTOR = 1e-2


@dataclass(frozen=True)
class SolverOptions:
    """Options of the incremental solver"""

    algorithm: str = "proximal_gradient_accelerated"
    max_iterations: int = 20000
    objective_tolerance: float = 1e-13
    residual_tolerance: float = 1e-9
    power_iterations: int = 50
    safety_factor: float = 1.05
    restart_on_nonmonotone: bool = True
    nonconvex_enrichment: bool = True
    schur_polish: bool = True
    stall_window: int = 500
    stall_factor: float = 0.5

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise SolverError(f"unknown algorithm {self.algorithm!r}; expected one of {', '.join(ALGORITHMS)}")
        if self.max_iterations < 1:
            raise SolverError("max_iterations must be >= 1")
        if self.objective_tolerance <= 0.0 or self.residual_tolerance <= 0.0:
            raise SolverError("solver tolerances must be > 0")
        if self.power_iterations < 1 or self.safety_factor < 1.0:
            raise SolverError("power_iterations must be >= 1 and safety_factor >= 1")
        if self.stall_window < 1 or not 0.0 <= self.stall_factor < 1.0:
            raise SolverError("stall_window must be >= 1 and stall_factor in [0, 1)")

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class SolverInfo:
    """Per-step solver record serialized into the trace"""

    iterations: int
    objective: float
    residual: float
    converged: bool
    algorithm: str
    restarts: int = 0
    candidate: str = "stationary"
    lipschitz: float = float("nan")

    def to_dict(self) -> Dict:
        return asdict(self)


def lipschitz_bound(matrix, iterations: int = 50, safety: float = 1.05) -> float:
    """
    Upper estimate of the largest eigenvalue of a symmetric positive semidefinite matrix

    Power iteration from a fixed seed; the estimate ‖Kv‖ with ‖v‖ = 1 is
    scaled by ``safety``.
    """
    n = matrix.shape[0]
    if n == 0:
        return 0.0
    rng = np.random.default_rng(0)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(iterations):
        w = matrix @ v
        estimate = float(np.linalg.norm(w))
        if estimate == 0.0:
            return 0.0
        v = w / estimate
    return safety * estimate


class SolverWorkspace:
    """Quantities reused by every step of a run: stiffness, pair layout, step bound, Schur operator"""

    def __init__(self, mesh: Mesh, model: BulkModel, opts: Optional[SolverOptions] = None):
        self.mesh = mesh
        self.model = model
        self.opts = opts or SolverOptions()
        self.free, self.fixed = mesh.dof_partition()
        self.free_mask = np.zeros(mesh.n_dofs, dtype=bool)
        self.free_mask[self.free] = True
        self.free_mask = self.free_mask.reshape(mesh.n_nodes, mesh.field_dimension)

        pairs = mesh.pairs
        self.open_index = pairs.open_indices
        self.plus = pairs.plus[self.open_index]
        self.minus = pairs.minus[self.open_index]
        self.weights = pairs.weights[self.open_index]
        free_node = ~mesh.dirichlet_mask
        self.plus_free = free_node[self.plus]
        self.minus_free = free_node[self.minus]
        self.both_free = self.plus_free & self.minus_free

        self.stiffness = stiffness_matrix(model, mesh) if model.is_quadratic else None
        self._lipschitz: Optional[float] = None
        self._schur: Optional[SchurOperator] = None

    @property
    def lipschitz(self) -> float:
        """Λ ≥ λmax(K_ff), the step bound of the quadratic part (Laplacian part for p ≠ 2)"""
        if self._lipschitz is None:
            stiffness = self.stiffness
            if stiffness is None:
                stiffness = stiffness_matrix(BulkModel("quadratic_scalar", modulus=self.model.modulus), self.mesh)
            k_ff = stiffness[self.free][:, self.free]
            self._lipschitz = lipschitz_bound(k_ff, self.opts.power_iterations, self.opts.safety_factor)
            logger.debug("lipschitz bound %.6g", self._lipschitz)
        return self._lipschitz

    @property
    def schur(self) -> SchurOperator:
        if self.stiffness is None:
            raise SolverError(f"Schur reduction needs a quadratic bulk model, got {self.model.variant} p={self.model.p}")
        if self._schur is None:
            self._schur = SchurOperator(self.mesh, self.stiffness)
        return self._schur

    def smooth_value(self, u: np.ndarray, ell: np.ndarray) -> float:
        if self.stiffness is not None:
            flat = u.ravel()
            return float(0.5 * flat @ (self.stiffness @ flat) - ell.ravel() @ flat)
        return bulk_energy(self.model, self.mesh, u) - float(np.sum(ell * u))

    def smooth_gradient(self, u: np.ndarray, ell: np.ndarray) -> np.ndarray:
        if self.stiffness is not None:
            grad = (self.stiffness @ u.ravel()).reshape(u.shape) - ell
        else:
            grad = bulk_gradient(self.model, self.mesh, u) - ell
        return np.where(self.free_mask, grad, 0.0)

    def cost(self, u: np.ndarray, law: CohesiveLaw, gamma: np.ndarray) -> float:
        if self.open_index.size == 0:
            return 0.0
        jumps = u[self.plus] - u[self.minus]
        return float(np.dot(self.weights, increment_cost(law, jumps, gamma)))

    def objective(self, u: np.ndarray, ell: np.ndarray, law: CohesiveLaw, gamma: np.ndarray) -> float:
        value = self.smooth_value(u, ell) + self.cost(u, law, gamma)
        if not np.isfinite(value):
            raise SolverError("incremental objective became non-finite")
        return value

    def prox(self, v: np.ndarray, step: float, law: CohesiveLaw, gamma: np.ndarray) -> np.ndarray:
        """
        Exact prox of step·Σ wₑ(φ([u]ₑ) − γₑ)⁺ at v

        Twins both free: the mean is kept and the jump gets c = 1/(2·step).
        One twin on ∂₀Ω: the free twin moves, c = 1/step.
        """
        out = v.copy()
        if self.open_index.size == 0:
            return out
        vp, vm = v[self.plus], v[self.minus]
        c = np.where(self.both_free, 0.5 / step, 1.0 / step)
        delta = prox_increment(law, vp - vm, gamma, c, self.weights)
        mean = 0.5 * (vp + vm)
        both = self.both_free[:, None]
        out[self.plus] = np.where(both, mean + 0.5 * delta, np.where(self.plus_free[:, None], vm + delta, vp))
        out[self.minus] = np.where(both, mean - 0.5 * delta, np.where(self.minus_free[:, None], vp - delta, vm))
        return out

    def gradient_mapping(self, u: np.ndarray, ell: np.ndarray, law: CohesiveLaw, gamma: np.ndarray,
                         step: Optional[float] = None) -> float:
        """‖(u − prox(u − s∇f(u)))/s‖ over the free dofs, a stationarity measure"""
        if step is None:
            step = 1.0 / self.lipschitz if self.lipschitz > 0.0 else 1.0
        moved = self.prox(u - step * self.smooth_gradient(u, ell), step, law, gamma)
        return float(np.linalg.norm((u - moved)[self.free_mask]) / step)


def _accelerated_proximal_gradient(ws: SolverWorkspace, u0: np.ndarray, ell: np.ndarray,
                                   law: CohesiveLaw, gamma: np.ndarray,
                                   opts: SolverOptions) -> Tuple[np.ndarray, SolverInfo, bool]:
    """
    FISTA with function-value restart; backtracking when the bulk energy is not quadratic

    For quadratic bulk energies with ``schur_polish`` the gradient mapping is
    sampled every ``stall_window`` iterations; a run whose residual did not
    shrink by ``stall_factor`` since the last sample stops early and reports
    itself as stalled.

    Returns:
        Tuple of (u, SolverInfo, stalled flag)
    """
    quadratic = ws.stiffness is not None
    watch = quadratic and opts.schur_polish
    lipschitz = ws.lipschitz if ws.lipschitz > 0.0 else 1.0
    step = 1.0 / lipschitz
    threshold = opts.residual_tolerance * (1.0 + float(np.linalg.norm(ell)))

    u = u0.copy()
    value = ws.objective(u, ell, law, gamma)
    y = u.copy()
    momentum = 1.0
    restarts = 0
    residual = np.inf
    checkpoint = ws.gradient_mapping(u, ell, law, gamma, step) if watch else np.inf
    converged = False
    stalled = False
    iteration = 0
    for iteration in range(1, opts.max_iterations + 1):
        grad = ws.smooth_gradient(y, ell)
        if quadratic:
            u_new = ws.prox(y - step * grad, step, law, gamma)
        else:
            step *= 1.25
            smooth_y = ws.smooth_value(y, ell)
            while True:
                u_new = ws.prox(y - step * grad, step, law, gamma)
                diff = u_new - y
                bound = smooth_y + float(np.sum(grad * diff)) + float(np.sum(diff * diff)) / (2.0 * step)
                if ws.smooth_value(u_new, ell) <= bound + 1e-15 * (1.0 + abs(bound)):
                    break
                step *= 0.5
        new_value = ws.objective(u_new, ell, law, gamma)

        if opts.restart_on_nonmonotone and new_value > value:
            restarts += 1
            momentum = 1.0
            u_new = ws.prox(u - step * ws.smooth_gradient(u, ell), step, law, gamma)
            new_value = ws.objective(u_new, ell, law, gamma)
            if new_value > value + 1e-15 * (1.0 + abs(value)):
                # the step bound was too optimistic
                lipschitz *= 2.0
                step = 1.0 / lipschitz if quadratic else 0.5 * step
                y = u.copy()
                continue

        momentum_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * momentum ** 2))
        y = u_new + ((momentum - 1.0) / momentum_next) * (u_new - u)
        decrease = value - new_value
        u, value, momentum = u_new, new_value, momentum_next

        if decrease <= opts.objective_tolerance:
            residual = ws.gradient_mapping(u, ell, law, gamma, step)
            if residual <= threshold:
                converged = True
                break

        if watch and iteration % opts.stall_window == 0:
            residual = ws.gradient_mapping(u, ell, law, gamma, step)
            if residual > threshold and residual > opts.stall_factor * checkpoint:
                stalled = True
                break
            checkpoint = residual

    if not converged:
        residual = ws.gradient_mapping(u, ell, law, gamma, step)
    info = SolverInfo(iterations=iteration, objective=value, residual=residual, converged=converged,
                      algorithm="proximal_gradient_accelerated", restarts=restarts, lipschitz=lipschitz)
    return u, info, stalled


def _schur_coordinate_descent(ws: SolverWorkspace, u0: np.ndarray, psi: np.ndarray, ell: np.ndarray,
                              law_open: CohesiveLaw, gamma_open: np.ndarray, law: CohesiveLaw,
                              gamma: np.ndarray, opts: SolverOptions,
                              step_tolerance: Optional[float] = None) -> Tuple[np.ndarray, SolverInfo]:
    operator = ws.schur
    problem = operator.reduce(psi, ell)
    index = problem.pair_index
    delta, sweeps, converged = coordinate_descent(
        problem,
        law.restrict(index),
        gamma[index],
        ws.mesh.pairs.weights[index],
        operator.jumps_of(u0),
        opts.max_iterations,
        opts.objective_tolerance,
        opts.residual_tolerance if step_tolerance is None else step_tolerance,
    )
    u = operator.recover(delta, psi, ell)
    residual = ws.gradient_mapping(u, ell, law_open, gamma_open)
    threshold = opts.residual_tolerance * (1.0 + float(np.linalg.norm(ell)))
    info = SolverInfo(iterations=sweeps, objective=ws.objective(u, ell, law_open, gamma_open),
                      residual=residual, converged=converged and residual <= threshold,
                      algorithm="schur_coordinate_descent", lipschitz=ws.lipschitz)
    return u, info


def schur_polish(ws: SolverWorkspace, u: np.ndarray, info: SolverInfo, psi: np.ndarray, ell: np.ndarray,
                 law_open: CohesiveLaw, gamma_open: np.ndarray, law: CohesiveLaw, gamma: np.ndarray,
                 opts: SolverOptions) -> Tuple[np.ndarray, SolverInfo]:
    """
    Finish a stalled FISTA run on the interface

    Coordinate descent starts from the jumps of ``u`` and the bulk field is
    recovered exactly from the sparse LU factor. The FISTA field is kept when
    the polished one has a larger objective.
    """
    polished, extra = _schur_coordinate_descent(ws, u, psi, ell, law_open, gamma_open, law, gamma, opts,
                                                step_tolerance=POLISH_STEP_FACTOR * opts.residual_tolerance)
    logger.debug("schur polish: %d sweeps, residual %.3e -> %.3e", extra.iterations, info.residual, extra.residual)
    if extra.objective > info.objective + 1e-12 * (1.0 + abs(info.objective)):
        return u, replace(info, iterations=info.iterations + extra.iterations)
    return polished, replace(extra, iterations=info.iterations + extra.iterations,
                             algorithm="proximal_gradient_accelerated+schur", restarts=info.restarts)


def _slope_law(law: CohesiveLaw, gamma: np.ndarray) -> Tuple[CohesiveLaw, np.ndarray]:
    """Convex law b|y| with γ' = (γ − a)⁺: the open branch of an activated law"""
    return CohesiveLaw("linear", a=0.0, b=law.b), np.maximum(gamma - np.asarray(law.a, dtype=float), 0.0)


def enrich_nonconvex(ws: SolverWorkspace, u: np.ndarray, info: SolverInfo, psi: np.ndarray, ell: np.ndarray,
                     law: CohesiveLaw, gamma: np.ndarray, opts: SolverOptions) -> Tuple[np.ndarray, SolverInfo]:
    """Compare the stationary point with the fully closed and the open-slope fields"""
    operator = ws.schur
    index = operator.pair_index
    pairs = ws.mesh.pairs
    law_open = law.restrict(ws.open_index)
    gamma_open = gamma[ws.open_index]

    closed = operator.recover(np.zeros(operator.n_delta), psi, ell)
    slope_law, slope_gamma = _slope_law(law.restrict(index), gamma[index])
    problem = operator.reduce(psi, ell)
    delta, _, _ = coordinate_descent(problem, slope_law, slope_gamma, pairs.weights[index],
                                     operator.jumps_of(u), opts.max_iterations,
                                     opts.objective_tolerance, opts.residual_tolerance)
    opened = operator.recover(delta, psi, ell)

    candidates = [
        ("closed", closed, ws.objective(closed, ell, law_open, gamma_open)),
        ("stationary", u, info.objective),
        ("open_slope", opened, ws.objective(opened, ell, law_open, gamma_open)),
    ]
    best = min(value for _, _, value in candidates)
    for name, field, value in candidates:
        if value <= best + 1e-12 * (1.0 + abs(best)):
            if name != "stationary":
                logger.debug("nonconvex enrichment picked the %s candidate (%.17g < %.17g)", name, value, info.objective)
                info = replace(info, objective=value, candidate=name,
                               residual=ws.gradient_mapping(field, ell, law_open, gamma_open))
            return field, info
    return u, info


def incremental_solve(mesh: Mesh,
                      model: BulkModel,
                      law: CohesiveLaw,
                      prog: LoadProgram,
                      t: float,
                      gamma_prev: InternalVariable,
                      u_init,
                      opts: Optional[SolverOptions] = None,
                      workspace: Optional[SolverWorkspace] = None) -> Tuple[np.ndarray, SolverInfo]:
    """
    Solve one incremental problem at time t

    Args:
        mesh, model, law, prog: Problem data
        t: Time of the step
        gamma_prev: Internal variable of the previous step
        u_init: Starting field; its Dirichlet entries are overwritten with ψ(t)
        opts: Solver options
        workspace: Cached run data (built on the fly when omitted)

    Returns:
        Tuple of (u of shape (N, m), SolverInfo); the reported objective
        includes the constant ‖γ_prev‖₁

    Raises:
        SolverError: For a non-finite objective or Schur on a non-quadratic bulk
    """
    opts = opts or SolverOptions()
    ws = workspace or SolverWorkspace(mesh, model, opts)
    law.check_size(len(mesh.pairs))
    gamma = gamma_prev.values
    psi = boundary_value(prog, mesh, t)
    ell = load_covector(prog, mesh, t)

    u0 = mesh.as_field(u_init).copy()
    u0[mesh.dirichlet_nodes] = psi[mesh.dirichlet_nodes]

    law_open = law.restrict(ws.open_index)
    gamma_open = gamma[ws.open_index]
    if opts.algorithm == "schur_coordinate_descent":
        u, info = _schur_coordinate_descent(ws, u0, psi, ell, law_open, gamma_open, law, gamma, opts)
    else:
        u, info, stalled = _accelerated_proximal_gradient(ws, u0, ell, law_open, gamma_open, opts)
        if stalled:
            u, info = schur_polish(ws, u, info, psi, ell, law_open, gamma_open, law, gamma, opts)

    if opts.nonconvex_enrichment and not law.is_convex and ws.stiffness is not None and ws.open_index.size:
        u, info = enrich_nonconvex(ws, u, info, psi, ell, law, gamma, opts)

    info = replace(info, objective=info.objective + gamma_prev.norm1)
    logger.debug("t=%.6g %s: %d iterations, objective %.17g, residual %.3e, converged=%s",
                 t, info.algorithm, info.iterations, info.objective, info.residual, info.converged)
    if not info.converged:
        logger.warning("step at t=%.6g did not converge (residual %.3e after %d iterations)",
                       t, info.residual, info.iterations)
    return u, info
