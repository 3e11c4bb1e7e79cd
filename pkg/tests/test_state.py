"""
Tests for the state model: internal variable, energy, admissibility and stability
"""

import numpy as np
import pytest

from src.geometry.mesh import build_rod_mesh
from src.loads.program import BoundaryDeformation, LoadProgram, TimeProfile, boundary_value
from src.materials.bulk import BulkModel
from src.materials.cohesive import CohesiveLaw
from src.models.state import (
    AdmissibilityError,
    Configuration,
    InternalVariable,
    IrreversibilityError,
    apriori_bounds,
    dissipation_distance,
    is_admissible,
    join,
    random_competitors,
    stability_check,
    total_energy,
)


def rod_problem():
    """Rod of length 2 cut at x = 1, ψ(t) = t at the right end"""
    mesh = build_rod_mesh(2.0, 2, 1.0)
    prog = LoadProgram(boundary=BoundaryDeformation(profile=TimeProfile("linear_ramp", 1.0),
                                                    gradient=np.array([0.5])))
    return mesh, prog, BulkModel(), CohesiveLaw("linear", b=0.25)


def opened(t, delta):
    """Rod field with jump delta at the interface and equal strains on both halves"""
    strain = (t - delta) / 2.0
    return np.array([0.0, strain, strain + delta, t])


class TestInternalVariable:
    """Tests for InternalVariable"""

    def test_uniform(self):
        """Test a uniform γ carries the interface weights"""
        mesh, _, _, _ = rod_problem()
        gamma = InternalVariable.uniform(mesh, 0.2)

        assert gamma.values.tolist() == [0.2]
        assert gamma.norm1 == pytest.approx(0.2)

    def test_negative_rejected(self):
        """Test γ < 0 is rejected"""
        with pytest.raises(AdmissibilityError, match=">= 0"):
            InternalVariable(values=[-0.1], weights=[1.0])

    def test_nan_rejected(self):
        """Test a non-finite γ is rejected"""
        with pytest.raises(AdmissibilityError, match="finite"):
            InternalVariable(values=[np.nan], weights=[1.0])

    def test_size_mismatch(self):
        """Test values and weights must match"""
        with pytest.raises(AdmissibilityError, match="2 values for 1"):
            InternalVariable(values=[0.0, 0.0], weights=[1.0])

    def test_copy_is_independent(self):
        """Test copy() does not share the values"""
        gamma = InternalVariable(values=[0.1], weights=[1.0])
        clone = gamma.copy()
        clone.values[0] = 5.0

        assert gamma.values[0] == 0.1


class TestJoinAndDissipation:
    """Tests for join and dissipation_distance"""

    def test_join(self):
        """Test the pointwise maximum"""
        gamma = InternalVariable(values=[0.1, 0.5], weights=[1.0, 2.0])

        assert join(gamma, [0.3, 0.2]).values.tolist() == [0.3, 0.5]

    def test_join_scalar(self):
        """Test joining with a scalar broadcasts"""
        gamma = InternalVariable(values=[0.1, 0.5], weights=[1.0, 2.0])

        assert join(gamma, 0.2).values.tolist() == [0.2, 0.5]

    def test_distance(self):
        """Test the weighted ℓ¹ growth"""
        g1 = InternalVariable(values=[0.1, 0.5], weights=[1.0, 2.0])
        g2 = InternalVariable(values=[0.3, 0.5], weights=[1.0, 2.0])

        assert dissipation_distance(g1, g2) == pytest.approx(0.2)
        assert dissipation_distance(g1, g1) == 0.0

    def test_decrease_raises(self):
        """Test a decreasing internal variable is reported with its node"""
        g1 = InternalVariable(values=[0.1, 0.5], weights=[1.0, 2.0])
        g2 = InternalVariable(values=[0.3, 0.4], weights=[1.0, 2.0])

        with pytest.raises(IrreversibilityError, match="node 1"):
            dissipation_distance(g1, g2)


class TestEnergy:
    """Tests for total_energy and is_admissible"""

    def test_elastic_energy(self):
        """Test the uncracked rod at t = 1 stores t²/4"""
        mesh, prog, model, law = rod_problem()
        cfg = Configuration(u=opened(1.0, 0.0), gamma=InternalVariable.uniform(mesh), t=1.0)
        energy = total_energy(cfg, model, law, prog, mesh)

        assert energy.bulk == pytest.approx(0.25)
        assert energy.load_work == 0.0
        assert energy.total == pytest.approx(0.25)

    def test_crack_term(self):
        """Test ‖γ‖₁ enters the total"""
        mesh, prog, model, law = rod_problem()
        cfg = Configuration(u=opened(1.0, 0.5), gamma=InternalVariable.uniform(mesh, 0.125), t=1.0)
        energy = total_energy(cfg, model, law, prog, mesh)

        assert energy.bulk == pytest.approx(0.0625)
        assert energy.crack_term == pytest.approx(0.125)
        assert energy.total == pytest.approx(0.1875)
        assert energy.to_dict()["total"] == energy.total

    def test_admissible_elastic(self):
        """Test an uncracked field matching ψ is admissible for γ = 0"""
        mesh, prog, _, law = rod_problem()
        cfg = Configuration(u=opened(0.5, 0.0), gamma=InternalVariable.uniform(mesh), t=0.5)

        assert is_admissible(cfg, law, prog, mesh).admissible

    def test_opening_needs_gamma(self):
        """Test φ([u]) ≤ γ decides admissibility of an opened field"""
        mesh, prog, _, law = rod_problem()
        u = opened(1.0, 1.0)

        report = is_admissible(Configuration(u=u, gamma=InternalVariable.uniform(mesh), t=1.0), law, prog, mesh)
        assert not report.admissible
        assert report.max_cohesive_excess == pytest.approx(0.25)
        assert is_admissible(Configuration(u=u, gamma=InternalVariable.uniform(mesh, 0.25), t=1.0),
                             law, prog, mesh).admissible

    def test_dirichlet_violation(self):
        """Test a field off the boundary deformation is not admissible"""
        mesh, prog, _, law = rod_problem()
        report = is_admissible(Configuration(u=opened(0.5, 0.0), gamma=InternalVariable.uniform(mesh), t=1.0),
                               law, prog, mesh)

        assert not report.admissible
        assert report.max_dirichlet_error == pytest.approx(0.5)


class TestStability:
    """Tests for the sampled stability certificate"""

    def test_elastic_state_is_stable(self):
        """Test the elastic state below the opening threshold passes against random competitors"""
        mesh, prog, model, law = rod_problem()
        cfg = Configuration(u=opened(0.4, 0.0), gamma=InternalVariable.uniform(mesh), t=0.4)
        competitors = random_competitors(cfg, mesh, prog, 30, np.random.default_rng(0))
        competitors.append(opened(0.4, 0.2))

        report = stability_check(cfg, competitors, model, law, prog, mesh)
        assert report.passed
        assert report.n_competitors == 31

    def test_overloaded_elastic_state_fails(self):
        """Test the elastic state beyond the threshold loses against an opened competitor"""
        mesh, prog, model, law = rod_problem()
        cfg = Configuration(u=opened(1.0, 0.0), gamma=InternalVariable.uniform(mesh), t=1.0)

        report = stability_check(cfg, [opened(1.0, 0.5)], model, law, prog, mesh)
        assert not report.passed
        assert report.max_violation == pytest.approx(0.0625)

    def test_competitor_off_boundary(self):
        """Test a competitor violating ψ is rejected"""
        mesh, prog, model, law = rod_problem()
        cfg = Configuration(u=opened(1.0, 0.0), gamma=InternalVariable.uniform(mesh), t=1.0)

        with pytest.raises(AdmissibilityError, match="competitor 0"):
            stability_check(cfg, [np.zeros(4)], model, law, prog, mesh)

    def test_random_competitors(self):
        """Test the first competitor is ψ and every competitor matches ψ on ∂₀Ω"""
        mesh, prog, _, _ = rod_problem()
        cfg = Configuration(u=opened(0.7, 0.1), gamma=InternalVariable.uniform(mesh, 0.025), t=0.7)
        competitors = random_competitors(cfg, mesh, prog, 5, np.random.default_rng(1))
        psi = boundary_value(prog, mesh, 0.7)

        assert len(competitors) == 5
        np.testing.assert_array_equal(competitors[0], psi)
        for v in competitors:
            np.testing.assert_array_equal(v[mesh.dirichlet_nodes], psi[mesh.dirichlet_nodes])

    def test_random_competitors_seeded(self):
        """Test the same seed gives the same competitors"""
        mesh, prog, _, _ = rod_problem()
        cfg = Configuration(u=opened(0.7, 0.0), gamma=InternalVariable.uniform(mesh), t=0.7)
        first = random_competitors(cfg, mesh, prog, 4, np.random.default_rng(42))
        second = random_competitors(cfg, mesh, prog, 4, np.random.default_rng(42))

        for a, b in zip(first, second):
            np.testing.assert_array_equal(a, b)
        assert random_competitors(cfg, mesh, prog, 0, np.random.default_rng(42)) == []


class TestAprioriBounds:
    """Tests for data-only bounds"""

    def test_rod_bounds(self):
        """Test the caps of the unloaded rod driven to t = 1"""
        mesh, prog, model, law = rod_problem()
        gamma0 = InternalVariable.uniform(mesh)
        bounds = apriori_bounds(mesh, model, law, prog, np.linspace(0.0, 1.0, 11), gamma0)

        assert bounds.available
        assert bounds.stored_minus_work_cap == pytest.approx(0.25)
        # free bars: u* opens by 1, slack √2·√0.5, radius 2, φ = 0.25·2
        assert bounds.gamma_cap == pytest.approx(0.5)
        assert bounds.energy_norm_cap >= np.sqrt(0.5)

    def test_gamma_cap_covers_initial(self):
        """Test the γ cap never falls below the initial internal variable"""
        mesh, prog, model, law = rod_problem()
        gamma0 = InternalVariable.uniform(mesh, 0.8)
        bounds = apriori_bounds(mesh, model, law, prog, [0.0, 0.5, 1.0], gamma0)

        assert bounds.gamma_cap >= gamma0.norm1

    def test_unavailable_for_p_power(self):
        """Test non-quadratic bulk energies report no bounds"""
        mesh, prog, _, law = rod_problem()
        bounds = apriori_bounds(mesh, BulkModel(variant="p_power", p=3.0), law, prog, [0.0, 1.0],
                                InternalVariable.uniform(mesh))

        assert not bounds.available
        assert "not quadratic" in bounds.reason
