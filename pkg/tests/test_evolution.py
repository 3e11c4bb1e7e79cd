"""
Tests for the evolution driver, the trace invariants and the energy balance
"""

import numpy as np
import pandas as pd
import pytest

from src.evolution.balance import energy_balance_report
from src.evolution.driver import (
    EvolutionError,
    EvolutionOptions,
    StepNotConvergedError,
    TimeGrid,
    initial_configuration,
    run_evolution,
    theta,
)
from src.evolution.invariants import (
    check_admissibility,
    check_dissipation,
    check_esssup_identity,
    check_irreversibility,
    check_trace,
)
from src.geometry.mesh import build_rect_mesh_with_crack, build_rod_mesh, jump
from src.loads.program import BoundaryDeformation, LoadProgram, TimeProfile
from src.materials.bulk import BulkModel
from src.materials.cohesive import CohesiveLaw
from src.models.state import AdmissibilityError, Configuration, InternalVariable
from src.solver.incremental import SolverOptions

SCHUR = SolverOptions(algorithm="schur_coordinate_descent")
QUIET = EvolutionOptions(solver=SCHUR, certificate_competitors=0)


def rod_setup(horizon=1.0, profile=None):
    mesh = build_rod_mesh(2.0, 2, 1.0)
    profile = profile or TimeProfile("linear_ramp", 1.0)
    prog = LoadProgram(horizon=horizon, boundary=BoundaryDeformation(profile=profile, gradient=np.array([0.5])))
    return mesh, prog


def run_rod(steps=100, b=0.25, opts=QUIET, horizon=1.0, profile=None):
    mesh, prog = rod_setup(horizon, profile)
    law = CohesiveLaw("linear", b=b)
    initial = initial_configuration(mesh, BulkModel(), law, prog, InternalVariable.uniform(mesh))
    return run_evolution(mesh, BulkModel(), law, prog, TimeGrid.uniform(horizon, steps), initial, opts)


class TestTimeGrid:
    """Tests for TimeGrid"""

    def test_uniform(self):
        """Test a uniform grid ends exactly at T"""
        grid = TimeGrid.uniform(2.0, 8)

        assert grid.steps == 8
        assert grid.knots[0] == 0.0
        assert grid.horizon == 2.0

    def test_tau(self):
        """Test τ(t) is the index of the greatest knot ≤ t"""
        grid = TimeGrid.uniform(1.0, 4)

        assert grid.tau(0.0) == 0
        assert grid.tau(0.3) == 1
        assert grid.tau(0.5) == 2
        assert grid.tau(1.0) == 4

    @pytest.mark.parametrize("knots,message", [
        ((0.0,), "at least two"),
        ((0.1, 0.5), "first knot"),
        ((0.0, 0.5, 0.5), "strictly increasing"),
    ])
    def test_invalid_knots(self, knots, message):
        """Test illegal grids are rejected"""
        with pytest.raises(EvolutionError, match=message):
            TimeGrid(knots)

    def test_horizon_mismatch(self):
        """Test a grid ending before the program horizon is rejected"""
        mesh, prog = rod_setup()
        law = CohesiveLaw("linear", b=0.25)
        initial = initial_configuration(mesh, BulkModel(), law, prog, InternalVariable.uniform(mesh))

        with pytest.raises(EvolutionError, match="horizon"):
            run_evolution(mesh, BulkModel(), law, prog, TimeGrid.uniform(0.5, 5), initial, QUIET)


class TestInitialState:
    """Tests for initial_configuration"""

    def test_lift(self):
        """Test the lifted initial state is ψ(0) with γ⁰ unchanged"""
        mesh, prog = rod_setup()
        gamma0 = InternalVariable.uniform(mesh, 0.1)
        cfg = initial_configuration(mesh, BulkModel(), CohesiveLaw("linear", b=0.25), prog, gamma0)

        np.testing.assert_array_equal(cfg.u, 0.0)
        assert cfg.gamma.values.tolist() == [0.1]

    def test_solve_joins_gamma(self):
        """Test the solved initial state joins γ⁰ with the opening it produces"""
        mesh, prog = rod_setup(profile=TimeProfile("constant", 1.0))
        law = CohesiveLaw("linear", b=0.25)
        cfg = initial_configuration(mesh, BulkModel(), law, prog, InternalVariable.uniform(mesh),
                                    mode="solve", opts=SCHUR)

        assert cfg.u[2, 0] - cfg.u[1, 0] == pytest.approx(0.5)
        assert cfg.gamma.values[0] == pytest.approx(0.125)

    def test_unknown_mode(self):
        """Test an unknown initial mode is rejected"""
        mesh, prog = rod_setup()

        with pytest.raises(EvolutionError, match="unknown initial state"):
            initial_configuration(mesh, BulkModel(), CohesiveLaw("linear", b=0.25), prog,
                                  InternalVariable.uniform(mesh), mode="relax")

    def test_inadmissible_initial(self):
        """Test an opened initial field without memory is rejected by the driver"""
        mesh, prog = rod_setup()
        law = CohesiveLaw("linear", b=0.25)
        initial = Configuration(u=np.array([0.0, 0.0, 0.3, 0.0]), gamma=InternalVariable.uniform(mesh), t=0.0)

        with pytest.raises(AdmissibilityError, match="not admissible"):
            run_evolution(mesh, BulkModel(), law, prog, TimeGrid.uniform(1.0, 4), initial, QUIET)


class TestTheta:
    """Tests for the power of the external loading"""

    def test_elastic_phase(self):
        """Test θ = t/2 on the uncracked rod"""
        mesh, prog = rod_setup()
        t = 0.3
        u = np.array([0.0, t / 2.0, t / 2.0, t])

        assert theta(mesh, BulkModel(), prog, t, u) == pytest.approx(t / 2.0)

    def test_opened_rod(self):
        """Test θ equals the cohesive stress once the crack is open"""
        mesh, prog = rod_setup()
        u = np.array([0.0, 0.25, 0.75, 1.0])

        assert theta(mesh, BulkModel(), prog, 1.0, u) == pytest.approx(0.25)


class TestRunEvolution:
    """Tests for run_evolution"""

    def test_linear_rod_trajectory(self):
        """Test the rod opens by max(0, t − 2b) and γ follows b·δ"""
        trace = run_rod()
        frame = trace.to_frame()
        times = np.asarray(trace.times)
        jumps = np.array([u[2, 0] - u[1, 0] for u in trace.u])

        assert len(trace) == 101
        np.testing.assert_allclose(jumps, np.maximum(0.0, times - 0.5), atol=1e-10)
        np.testing.assert_allclose(np.array(trace.gamma)[:, 0], 0.25 * np.maximum(0.0, times - 0.5), atol=1e-10)
        np.testing.assert_allclose(frame["theta"], np.minimum(times / 2.0, 0.25), atol=1e-10)
        assert not trace.poisoned

    def test_linear_rod_balance(self):
        """Test the energy balance closes when the opening time is a knot"""
        trace = run_rod()
        report = energy_balance_report(trace)

        assert report.max_residual <= 1e-8
        assert report.lower_ok
        assert report.passed()

    def test_balance_converges_with_refinement(self):
        """Test the balance residual shrinks as the time step is refined"""
        residuals = [energy_balance_report(run_rod(steps, b=0.255)).max_residual for steps in (20, 40, 80)]

        assert residuals[0] == pytest.approx(1e-4, rel=1e-3)
        assert residuals[0] / residuals[1] >= 1.8
        assert residuals[1] / residuals[2] >= 1.8

    def test_trace_invariants_hold(self):
        """Test irreversibility, the ess-sup identity and admissibility along the run"""
        results = check_trace(run_rod(50))

        assert all(result.passed for result in results)

    def test_unloading_dissipates_nothing(self):
        """Test the descending branch of a triangle program adds no dissipation"""
        trace = run_rod(80, horizon=2.0, profile=TimeProfile("triangle", 1.0, apex=1.0))
        frame = trace.to_frame()
        unloading = frame[frame["time"] > 1.0 + 1e-9]

        assert unloading["dissipation_increment"].max() <= 1e-12
        assert frame["dissipation_increment"].min() >= 0.0
        assert np.all(np.diff(np.array(trace.gamma)[:, 0]) >= 0.0)

    def test_cumulative_dissipation(self):
        """Test the cumulative dissipation equals the final ‖γ‖₁"""
        frame = run_rod().to_frame()

        assert frame["cumulative_dissipation"].iloc[-1] == pytest.approx(0.125, abs=1e-10)
        assert frame["gamma_norm"].iloc[-1] == pytest.approx(0.125, abs=1e-10)

    def test_apriori_bounds_respected(self):
        """Test every knot stays inside the data-only bounds"""
        trace = run_rod(20)

        assert trace.bounds.available
        assert trace.to_frame()["apriori_ok"].all()

    def test_stability_certificates(self):
        """Test sampled certificates are taken on schedule and pass for the convex rod"""
        opts = EvolutionOptions(solver=SCHUR, certificate_competitors=12, certificate_every=5, seed=3)
        trace = run_rod(20, opts=opts)

        assert len(trace.stability) == 4
        assert all(report.passed for report in trace.stability)
        assert trace.metadata["initial_stability"] <= 1e-9

    def test_strict_mode_stops(self):
        """Test a starved solver aborts the run once the crack starts to open"""
        opts = EvolutionOptions(solver=SolverOptions(max_iterations=1), certificate_competitors=0, strict=True)

        with pytest.raises(StepNotConvergedError) as info:
            run_rod(100, opts=opts)
        assert info.value.step > 50
        assert len(info.value.trace) == info.value.step
        assert info.value.trace.poisoned

    def test_lenient_mode_marks_trace(self):
        """Test a starved solver in lenient mode finishes with a poisoned trace"""
        opts = EvolutionOptions(solver=SolverOptions(max_iterations=1), certificate_competitors=0, strict=False)
        trace = run_rod(100, opts=opts)
        frame = trace.to_frame()

        assert len(trace) == 101
        assert trace.poisoned
        assert not frame["converged"].all()
        assert frame["poisoned"].all()


class TestElasticPlateEvolution:
    """Tests for a planar linear elasticity run with the default solver"""

    def run_plate(self, steps=20):
        mesh = build_rect_mesh_with_crack(4.0, 4.0, 8, 8, (0.0, 2.0), field_dimension=2)
        model = BulkModel(variant="linear_elasticity", lame_lambda=1.0, lame_mu=1.0)
        law = CohesiveLaw("linear", b=0.5)
        prog = LoadProgram(boundary=BoundaryDeformation(profile=TimeProfile("linear_ramp", 1.0),
                                                        gradient=np.array([[0.0, 0.0], [0.0, 0.5]])))
        opts = EvolutionOptions(solver=SolverOptions(), certificate_competitors=0, strict=True)
        initial = initial_configuration(mesh, model, law, prog, InternalVariable.uniform(mesh))
        return mesh, run_evolution(mesh, model, law, prog, TimeGrid.uniform(1.0, steps), initial, opts)

    def test_runs_to_horizon(self):
        """Test the strict run reaches T with every step converged"""
        _, trace = self.run_plate()

        assert len(trace) == 21
        assert not trace.poisoned
        assert trace.to_frame()["converged"].all()

    def test_crack_opens_in_tension(self):
        """Test the pulled plate opens its crack in the normal direction and γ only grows"""
        mesh, trace = self.run_plate()
        final = jump(mesh, trace.u[-1])

        assert final[:, 1].max() > 1e-3
        assert final[:, 1].min() >= -1e-8
        assert np.all(np.diff(np.array(trace.gamma), axis=0) >= 0.0)
        assert all(result.passed for result in check_trace(trace))

    def test_lower_energy_inequality(self):
        """Test the energy ledger of the elastic plate keeps the lower inequality"""
        _, trace = self.run_plate()

        assert energy_balance_report(trace).lower_ok


class TestInvariantChecks:
    """Tests for the array invariants"""

    def test_irreversibility_located(self):
        """Test a decrease is reported at its knot and node"""
        gammas = [[0.0, 0.0], [0.1, 0.2], [0.1, 0.15]]
        result = check_irreversibility(gammas)

        assert not result.passed
        assert (result.knot, result.node) == (2, 1)
        assert result.worst == pytest.approx(0.05)
        assert "knot 2" in result.message

    def test_irreversibility_has_no_tolerance(self):
        """Test even a tiny decrease fails"""
        assert not check_irreversibility([0.5, 0.5 - 1e-15]).passed

    def test_esssup_identity(self):
        """Test γ equals the running maximum of φ joined with γ⁰"""
        phis = [[0.0], [0.3], [0.1], [0.4]]

        assert check_esssup_identity([[0.2], [0.3], [0.3], [0.4]], phis).passed
        assert not check_esssup_identity([[0.2], [0.3], [0.35], [0.4]], phis).passed

    def test_esssup_shape_mismatch(self):
        """Test histories of different shapes are rejected"""
        with pytest.raises(ValueError, match="differ in shape"):
            check_esssup_identity([[0.0, 0.0]], [[0.0]])

    def test_admissibility(self):
        """Test φ above γ is reported"""
        result = check_admissibility([[0.1], [0.2]], [[0.1], [0.3]])

        assert not result.passed
        assert result.knot == 1

    def test_dissipation(self):
        """Test negative increments fail"""
        assert check_dissipation([0.0, 0.1, 0.0]).passed
        assert not check_dissipation([0.0, -0.1]).passed


class TestEnergyBalanceReport:
    """Tests for energy_balance_report on plain tables"""

    def test_exact_balance(self):
        """Test E(t) = t with θ ≡ 1 has zero residual"""
        times = np.linspace(0.0, 1.0, 11)
        frame = pd.DataFrame({"time": times, "total": times, "theta": np.ones(11)})
        report = energy_balance_report(frame)

        assert report.max_residual == pytest.approx(0.0, abs=1e-14)
        assert report.lower_ok
        assert list(report.frame.columns)[:3] == ["time", "total", "theta"]

    def test_lower_inequality_violation(self):
        """Test an energy drop without matching power breaks the lower inequality"""
        frame = pd.DataFrame({"time": [0.0, 1.0], "total": [0.0, -1.0], "theta": [0.0, 0.0]})
        report = energy_balance_report(frame)

        assert not report.lower_ok
        assert not report.passed()

    def test_upper_estimate(self):
        """Test the upper estimate is the largest positive residual"""
        frame = pd.DataFrame({"time": [0.0, 1.0, 2.0], "total": [0.0, 0.5, 0.2], "theta": [0.0, 0.0, 0.0]})
        report = energy_balance_report(frame)

        assert report.upper_estimate == pytest.approx(0.5)
        assert report.relative_residual == pytest.approx(1.0)

    def test_zero_energy(self):
        """Test a run with no energy reports a zero relative residual"""
        frame = pd.DataFrame({"time": [0.0, 1.0], "total": [0.0, 0.0], "theta": [0.0, 0.0]})

        assert energy_balance_report(frame).relative_residual == 0.0
