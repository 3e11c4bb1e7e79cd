"""
Build a problem from a run configuration and execute one evolution with its diagnostics
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from config.run_config import ConfigError, ForceSpec, RunConfig
from src.analysis.euler import EulerError, EulerReport, euler_residuals
from src.evolution.balance import BalanceReport, energy_balance_report
from src.evolution.driver import (
    EvolutionError,
    EvolutionOptions,
    EvolutionTrace,
    TimeGrid,
    initial_configuration,
    run_evolution,
)
from src.evolution.invariants import InvariantResult, check_trace
from src.geometry.mesh import Mesh, MeshError, build_rect_mesh_with_crack, build_rod_mesh
from src.loads.program import BoundaryDeformation, LoadError, LoadProgram, LoadTerm, TimeProfile
from src.materials.bulk import BulkModel, MaterialError, resolve_modulus
from src.materials.cohesive import CohesiveLaw
from src.models.state import AdmissibilityError, InternalVariable
from src.solver.incremental import SolverOptions
from src.solver.schur import SolverError
from src.utils.parallel import parallel_map

logger = logging.getLogger(__name__)


@dataclass
class Problem:
    """Problem data assembled from a configuration"""

    mesh: Mesh
    model: BulkModel
    law: CohesiveLaw
    prog: LoadProgram
    grid: TimeGrid
    gamma0: InternalVariable


@dataclass
class RunResult:
    """Trace of a run together with its verification reports"""

    config: RunConfig
    problem: Problem
    trace: EvolutionTrace
    balance: BalanceReport
    invariants: List[InvariantResult] = field(default_factory=list)
    euler: List[EulerReport] = field(default_factory=list)

    @property
    def invariants_ok(self) -> bool:
        return all(result.passed for result in self.invariants)

    def summary(self) -> Dict:
        return {
            "steps": self.problem.grid.steps,
            "poisoned": self.trace.poisoned,
            "balance": self.balance.summary,
            "invariants": [r.to_dict() for r in self.invariants],
            "euler_worst": max((r.worst for r in self.euler), default=0.0),
            "stability_worst": max((r.max_violation for r in self.trace.stability), default=0.0),
        }


def _array(value) -> Optional[np.ndarray]:
    return None if value is None else np.asarray(value, dtype=float)


def _profile(spec) -> TimeProfile:
    return TimeProfile(kind=spec.kind, scale=spec.scale, apex=spec.apex, frequency=spec.frequency)


def _term(spec: ForceSpec) -> LoadTerm:
    return LoadTerm(profile=_profile(spec.profile), value=_array(spec.value), plus_value=_array(spec.plus_value))


def _build_mesh(cfg: RunConfig) -> Mesh:
    spec = cfg.mesh
    if spec.kind == "rod":
        return build_rod_mesh(spec.length, spec.n_elements, spec.interface_position,
                              dirichlet_sides=tuple(spec.dirichlet_sides),
                              neumann_sides=tuple(spec.neumann_sides),
                              field_dimension=spec.field_dimension)
    return build_rect_mesh_with_crack(spec.width, spec.height, spec.nx, spec.ny, tuple(spec.crack_x_range),
                                      dirichlet_sides=tuple(spec.dirichlet_sides),
                                      neumann_sides=tuple(spec.neumann_sides),
                                      field_dimension=spec.field_dimension)


def _initial_gamma(cfg: RunConfig, mesh: Mesh, root: Optional[Path]) -> InternalVariable:
    spec = cfg.initial
    if spec.gamma_file is None:
        return InternalVariable.uniform(mesh, spec.gamma)
    path = Path(spec.gamma_file)
    if root is not None and not path.is_absolute():
        path = root / path
    try:
        with open(path, "r", encoding="utf-8") as f:
            values = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"initial.gamma_file: cannot read {path} ({exc})") from exc
    return InternalVariable(values=np.asarray(values, dtype=float), weights=mesh.pairs.weights)


def build_problem(cfg: RunConfig, root: Optional[Path] = None) -> Problem:
    """
    Mesh, material, law, load program, grid and γ⁰ described by a configuration

    Args:
        cfg: Validated run configuration
        root: Directory against which relative file references resolve

    Raises:
        ConfigError: If a section is inconsistent with the others; the message
            names the section
    """
    section = "mesh"
    try:
        mesh = _build_mesh(cfg)
        section = "bulk"
        model = BulkModel(variant=cfg.bulk.variant, p=cfg.bulk.p, lame_lambda=cfg.bulk.lame_lambda,
                          lame_mu=cfg.bulk.lame_mu, modulus=resolve_modulus(cfg.bulk.modulus))
        model.check_mesh(mesh)
        model.element_modulus(mesh)
        section = "cohesive"
        law = CohesiveLaw(variant=cfg.cohesive.variant, a=_law_field(cfg.cohesive.a),
                          b=_law_field(cfg.cohesive.b), c=cfg.cohesive.c)
        law.check_size(len(mesh.pairs))
        section = "loads"
        loads = cfg.loads
        prog = LoadProgram(
            horizon=loads.horizon,
            boundary=BoundaryDeformation(profile=_profile(loads.boundary.profile),
                                         offset=_array(loads.boundary.offset),
                                         gradient=_array(loads.boundary.gradient)),
            body_force=_term(loads.body_force),
            stress_offset=_term(loads.stress_offset),
            surface_force=_term(loads.surface_force),
            crack_plus=_term(loads.crack_plus),
            crack_minus=_term(loads.crack_minus),
        )
        prog.check_mesh(mesh)
        section = "time"
        if cfg.time.knots is not None:
            grid = TimeGrid(tuple(cfg.time.knots))
        else:
            grid = TimeGrid.uniform(loads.horizon, cfg.time.steps)
        section = "initial"
        gamma0 = _initial_gamma(cfg, mesh, root)
    except (MeshError, MaterialError, LoadError, EvolutionError, AdmissibilityError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{section}: {exc}") from exc
    logger.info("built %s problem: %d nodes, %d elements, %d interface nodes, %d steps",
                cfg.mesh.kind, mesh.n_nodes, mesh.n_elements, len(mesh.pairs), grid.steps)
    return Problem(mesh=mesh, model=model, law=law, prog=prog, grid=grid, gamma0=gamma0)


def _law_field(value):
    return np.asarray(value, dtype=float) if isinstance(value, list) else float(value)


def evolution_options(cfg: RunConfig, strict: Optional[bool] = None, seed: Optional[int] = None) -> EvolutionOptions:
    """Driver options from a configuration, with command-line overrides"""
    verification = cfg.verification
    try:
        solver = SolverOptions(**cfg.solver.to_dict())
    except SolverError as exc:
        raise ConfigError(f"solver: {exc}") from exc
    return EvolutionOptions(
        solver=solver,
        strict=verification.strict if strict is None else strict,
        seed=verification.seed if seed is None else seed,
        certificate_competitors=verification.competitors,
        certificate_every=verification.certificate_every,
        check_apriori=verification.apriori,
    )


def euler_knots(cfg: RunConfig, steps: int) -> List[int]:
    knots = cfg.verification.euler_knots
    if knots == "none":
        return []
    if knots == "all":
        return list(range(steps + 1))
    return sorted(k for k in set(knots) if k <= steps)


def euler_reports(problem: Problem, trace: EvolutionTrace, knots: List[int],
                  example_mode: bool = False) -> List[EulerReport]:
    """Euler residuals at the requested knots, computed concurrently"""

    def report(index: int) -> EulerReport:
        return euler_residuals(problem.mesh, problem.model, problem.law, problem.prog,
                               trace.times[index], trace.u[index], trace.gamma[index], example_mode)

    try:
        return parallel_map(report, knots)
    except EulerError as exc:
        logger.warning("Euler analysis skipped: %s", exc)
        return []


def run_case(cfg: RunConfig,
             strict: Optional[bool] = None,
             seed: Optional[int] = None,
             root: Optional[Path] = None,
             diagnostics: bool = True) -> RunResult:
    """
    Run one configured evolution and its verification suite

    Args:
        cfg: Run configuration
        strict: Override of ``verification.strict``
        seed: Override of ``verification.seed``
        root: Directory against which relative file references resolve
        diagnostics: Compute Euler reports (the refinement study turns them off)

    Returns:
        RunResult

    Raises:
        ConfigError: For inconsistent configuration sections
        StepNotConvergedError: In strict mode, on a non-converged step
    """
    problem = build_problem(cfg, root)
    opts = evolution_options(cfg, strict, seed)
    try:
        initial = initial_configuration(problem.mesh, problem.model, problem.law, problem.prog,
                                        problem.gamma0, cfg.initial.state, opts.solver)
        trace = run_evolution(problem.mesh, problem.model, problem.law, problem.prog, problem.grid, initial, opts)
    except SolverError as exc:
        raise ConfigError(f"solver: {exc}") from exc
    trace.metadata["name"] = cfg.name
    balance = energy_balance_report(trace)
    invariants = check_trace(trace)
    reports = []
    if diagnostics:
        reports = euler_reports(problem, trace, euler_knots(cfg, problem.grid.steps),
                                cfg.verification.euler_example)
    return RunResult(config=cfg, problem=problem, trace=trace, balance=balance,
                     invariants=invariants, euler=reports)
