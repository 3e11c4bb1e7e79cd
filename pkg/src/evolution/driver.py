"""
Discrete-time quasistatic evolution driver
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from config.settings import STABILITY_TOLERANCE
from src.geometry.mesh import Mesh, jump
from src.loads.program import LoadProgram, boundary_rate, boundary_value, load_covector, load_rate_apply
from src.materials.bulk import BulkModel, bulk_pairing, energy_norm
from src.materials.cohesive import CohesiveLaw, phi
from src.models.state import (
    AdmissibilityError,
    AprioriBounds,
    Configuration,
    InternalVariable,
    StabilityReport,
    apriori_bounds,
    dissipation_distance,
    is_admissible,
    join,
    random_competitors,
    stability_check,
    total_energy,
)
from src.solver.incremental import SolverInfo, SolverOptions, SolverWorkspace, incremental_solve

logger = logging.getLogger(__name__)

INITIAL_STATES = ("lift", "solve")


class EvolutionError(ValueError):
    """Raised for an illegal time grid or initial state"""
    pass


class StepNotConvergedError(RuntimeError):
    """Raised in strict mode when a step misses the solver tolerance; carries the partial trace"""

    def __init__(self, message: str, step: int, trace: "EvolutionTrace"):
        super().__init__(message)
        self.step = step
        self.trace = trace


@dataclass(frozen=True)
class TimeGrid:
    """Knots 0 = t⁰ < t¹ < … < tᵏ = T"""

    knots: tuple

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        if knots.ndim != 1 or knots.size < 2:
            raise EvolutionError("a time grid needs at least two knots")
        if knots[0] != 0.0:
            raise EvolutionError(f"first knot must be 0, got {knots[0]!r}")
        if np.any(np.diff(knots) <= 0.0):
            raise EvolutionError("time knots must be strictly increasing")

    @classmethod
    def uniform(cls, horizon: float, steps: int) -> "TimeGrid":
        if steps < 1:
            raise EvolutionError("a uniform grid needs at least one step")
        knots = np.linspace(0.0, horizon, steps + 1)
        knots[-1] = horizon
        return cls(tuple(float(t) for t in knots))

    @property
    def horizon(self) -> float:
        return float(self.knots[-1])

    @property
    def steps(self) -> int:
        return len(self.knots) - 1

    def tau(self, t: float) -> int:
        """Index of the greatest knot ≤ t"""
        knots = np.asarray(self.knots)
        index = int(np.searchsorted(knots, t + 1e-12 * self.horizon, side="right")) - 1
        return max(0, min(index, self.steps))


@dataclass(frozen=True)
class EvolutionOptions:
    """Driver options"""

    solver: SolverOptions = field(default_factory=SolverOptions)
    strict: bool = True
    seed: int = 0
    certificate_competitors: int = 100
    certificate_every: int = 10
    amplitudes: tuple = (1e-3, 1e-2, 1e-1)
    check_apriori: bool = True


@dataclass
class KnotRecord:
    """One row of the trace ledger"""

    index: int
    time: float
    bulk: float
    load_work: float
    crack_term: float
    total: float
    bulk_minus_work: float
    gamma_norm: float
    theta: float
    work_integral: float
    dissipation_increment: float
    cumulative_dissipation: float
    balance_residual: float
    lower_tolerance: float
    max_jump: float
    gradient_norm: float
    stability_violation: float
    iterations: int
    objective: float
    solver_residual: float
    converged: bool
    candidate: str
    apriori_ok: bool


@dataclass
class EvolutionTrace:
    """Per-knot record of an evolution run"""

    times: List[float] = field(default_factory=list)
    u: List[np.ndarray] = field(default_factory=list)
    gamma: List[np.ndarray] = field(default_factory=list)
    phi_jump: List[np.ndarray] = field(default_factory=list)
    records: List[KnotRecord] = field(default_factory=list)
    stability: List[StabilityReport] = field(default_factory=list)
    weights: Optional[np.ndarray] = None
    bounds: Optional[AprioriBounds] = None
    poisoned: bool = False
    metadata: Dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def to_frame(self) -> pd.DataFrame:
        """Trace ledger as a table, one row per knot"""
        frame = pd.DataFrame([asdict(r) for r in self.records])
        if not frame.empty:
            frame["poisoned"] = self.poisoned
        return frame


def theta(mesh: Mesh, model: BulkModel, prog: LoadProgram, t: float, u) -> float:
    """
    θ(t) = ⟨∂𝒲(∇u), ∇ψ̇(t)⟩ − ⟨L(t), ψ̇(t)⟩ − ⟨L̇(t), u⟩

    For linear elasticity the first pairing is ⟨∂𝒬(Eu), Eψ̇⟩.
    """
    rate = boundary_rate(prog, mesh, t)
    stress_work = bulk_pairing(model, mesh, u, rate)
    load_on_rate = float(np.sum(load_covector(prog, mesh, t) * rate))
    return stress_work - load_on_rate - load_rate_apply(prog, mesh, t, u)


def initial_configuration(mesh: Mesh,
                          model: BulkModel,
                          law: CohesiveLaw,
                          prog: LoadProgram,
                          gamma0: InternalVariable,
                          mode: str = "lift",
                          opts: Optional[SolverOptions] = None,
                          workspace: Optional[SolverWorkspace] = None) -> Configuration:
    """
    Initial state at t = 0

    ``lift`` takes u⁰ = ψ(0); ``solve`` minimizes the t = 0 incremental problem
    and joins γ⁰ with φ([u⁰]).

    Raises:
        EvolutionError: For an unknown mode
    """
    if mode not in INITIAL_STATES:
        raise EvolutionError(f"unknown initial state {mode!r}; expected one of {', '.join(INITIAL_STATES)}")
    psi = boundary_value(prog, mesh, 0.0)
    if mode == "lift":
        return Configuration(u=psi, gamma=gamma0.copy(), t=0.0)
    u, info = incremental_solve(mesh, model, law, prog, 0.0, gamma0, psi, opts, workspace)
    if not info.converged:
        logger.warning("initial solve did not converge (residual %.3e)", info.residual)
    return Configuration(u=u, gamma=join(gamma0, phi(law, jump(mesh, u))), t=0.0)


def _competitor_check(cfg, mesh, model, law, prog, opts: EvolutionOptions, rng) -> StabilityReport:
    competitors = random_competitors(cfg, mesh, prog, opts.certificate_competitors, rng, opts.amplitudes)
    return stability_check(cfg, competitors, model, law, prog, mesh, STABILITY_TOLERANCE)


def run_evolution(mesh: Mesh,
                  model: BulkModel,
                  law: CohesiveLaw,
                  prog: LoadProgram,
                  grid: TimeGrid,
                  initial: Configuration,
                  opts: Optional[EvolutionOptions] = None) -> EvolutionTrace:
    """
    Incremental minimization along the time grid

    For i = 1…k: uⁱ solves the incremental problem at tⁱ with γⁱ⁻¹, then
    γⁱ = γⁱ⁻¹ ∨ φ([uⁱ]). The warm start is uⁱ⁻¹ + ψ(tⁱ) − ψ(tⁱ⁻¹).

    Args:
        mesh, model, law, prog: Problem data
        grid: Time grid with last knot T
        initial: Admissible configuration at t = 0
        opts: Driver options

    Returns:
        EvolutionTrace with one record per knot

    Raises:
        AdmissibilityError: If the initial configuration is not admissible
        StepNotConvergedError: In strict mode, on the first non-converged step
    """
    opts = opts or EvolutionOptions()
    if abs(grid.horizon - prog.horizon) > 1e-12 * prog.horizon:
        raise EvolutionError(f"grid ends at {grid.horizon!r}, load program horizon is {prog.horizon!r}")
    report = is_admissible(initial, law, prog, mesh)
    if not report.admissible:
        raise AdmissibilityError(
            f"initial configuration is not admissible (cohesive excess {report.max_cohesive_excess:.3e}, "
            f"Dirichlet error {report.max_dirichlet_error:.3e})"
        )

    rng = np.random.default_rng(opts.seed)
    workspace = SolverWorkspace(mesh, model, opts.solver)
    bounds = apriori_bounds(mesh, model, law, prog, grid.knots, initial.gamma) if opts.check_apriori \
        else AprioriBounds(available=False, reason="disabled")
    trace = EvolutionTrace(weights=initial.gamma.weights.copy(), bounds=bounds,
                           metadata={"steps": grid.steps, "horizon": grid.horizon})

    if opts.certificate_competitors > 0:
        initial_report = _competitor_check(initial, mesh, model, law, prog, opts, rng)
        trace.metadata["initial_stability"] = initial_report.max_violation
        if not initial_report.passed:
            logger.warning("initial state failed the sampled stability certificate (%.3e)",
                           initial_report.max_violation)

    energy0 = total_energy(initial, model, law, prog, mesh)
    theta_prev = theta(mesh, model, prog, 0.0, initial.u)
    state = {"work": 0.0, "lower": 0.0, "dissipation": 0.0}

    def record(index, cfg, info: Optional[SolverInfo], th, increment, violation):
        energy = total_energy(cfg, model, law, prog, mesh)
        jumps = jump(mesh, cfg.u)
        phis = phi(law, jumps)
        bmw = energy.bulk_minus_work
        grad_norm = energy_norm(model, mesh, cfg.u)
        apriori_ok = True
        if bounds.available:
            slack = 1e-9 * (1.0 + abs(bounds.stored_minus_work_cap))
            apriori_ok = (bmw <= bounds.stored_minus_work_cap + slack
                          and np.sqrt(2.0 * max(energy.bulk, 0.0)) <= bounds.energy_norm_cap * (1 + 1e-9) + 1e-12
                          and cfg.gamma.norm1 <= bounds.gamma_cap * (1 + 1e-9) + 1e-12)
        trace.times.append(cfg.t)
        trace.u.append(mesh.as_field(cfg.u).copy())
        trace.gamma.append(cfg.gamma.values.copy())
        trace.phi_jump.append(np.asarray(phis, dtype=float).copy())
        trace.records.append(KnotRecord(
            index=index,
            time=cfg.t,
            bulk=energy.bulk,
            load_work=energy.load_work,
            crack_term=energy.crack_term,
            total=energy.total,
            bulk_minus_work=bmw,
            gamma_norm=cfg.gamma.norm1,
            theta=th,
            work_integral=state["work"],
            dissipation_increment=increment,
            cumulative_dissipation=state["dissipation"],
            balance_residual=energy.total - energy0.total - state["work"],
            lower_tolerance=2.0 * state["lower"],
            max_jump=float(np.linalg.norm(jumps, axis=-1).max(initial=0.0)),
            gradient_norm=grad_norm,
            stability_violation=violation,
            iterations=info.iterations if info else 0,
            objective=info.objective if info else float("nan"),
            solver_residual=info.residual if info else 0.0,
            converged=info.converged if info else True,
            candidate=info.candidate if info else "initial",
            apriori_ok=bool(apriori_ok),
        ))
        if not apriori_ok:
            logger.warning("a-priori bound exceeded at knot %d (t=%.6g)", index, cfg.t)

    record(0, initial, None, theta_prev, 0.0, trace.metadata.get("initial_stability", float("nan")))

    current = initial
    for i in range(1, grid.steps + 1):
        t_prev, t = grid.knots[i - 1], grid.knots[i]
        warm = mesh.as_field(current.u) + boundary_value(prog, mesh, t) - boundary_value(prog, mesh, t_prev)
        u, info = incremental_solve(mesh, model, law, prog, t, current.gamma, warm, opts.solver, workspace)
        if not info.converged:
            trace.poisoned = True
            if opts.strict:
                raise StepNotConvergedError(
                    f"step {i} (t={t:.6g}) did not converge: residual {info.residual:.3e} "
                    f"after {info.iterations} iterations",
                    step=i,
                    trace=trace,
                )
        gamma = join(current.gamma, phi(law, jump(mesh, u)))
        increment = dissipation_distance(current.gamma, gamma)
        cfg = Configuration(u=u, gamma=gamma, t=t)

        th = theta(mesh, model, prog, t, u)
        dt = t - t_prev
        state["work"] += 0.5 * (th + theta_prev) * dt
        state["lower"] += 0.5 * abs(th - theta_prev) * dt
        state["dissipation"] += increment
        theta_prev = th

        violation = float("nan")
        every = opts.certificate_every
        if opts.certificate_competitors > 0 and every > 0 and i % every == 0:
            cert = _competitor_check(cfg, mesh, model, law, prog, opts, rng)
            trace.stability.append(cert)
            violation = cert.max_violation

        record(i, cfg, info, th, increment, violation)
        current = cfg

    logger.info("evolution finished: %d steps, final dissipation %.6g, poisoned=%s",
                grid.steps, state["dissipation"], trace.poisoned)
    return trace
