"""
Tests for time profiles, boundary deformations and load functionals
"""

import numpy as np
import pytest

from src.geometry.mesh import build_rect_mesh_with_crack, build_rod_mesh
from src.loads.program import (
    BoundaryDeformation,
    LoadError,
    LoadProgram,
    LoadTerm,
    TimeProfile,
    boundary_rate,
    boundary_value,
    load_apply,
    load_covector,
    load_rate_apply,
    load_rate_covector,
)


def unit(kind="constant", scale=1.0, **kwargs):
    return TimeProfile(kind=kind, scale=scale, **kwargs)


class TestTimeProfile:
    """Tests for TimeProfile"""

    def test_linear_ramp(self):
        """Test value and rate of a ramp"""
        profile = unit("linear_ramp", 2.0)

        assert profile.value(0.25) == pytest.approx(0.5)
        assert profile.rate(0.25) == 2.0
        assert profile.lipschitz == 2.0

    def test_triangle(self):
        """Test the triangle rises to the apex and falls back"""
        profile = unit("triangle", 1.0, apex=1.0)

        assert profile.value(0.5) == pytest.approx(0.5)
        assert profile.value(1.5) == pytest.approx(0.5)
        assert profile.rate(0.5) == 1.0
        assert profile.rate(1.5) == -1.0

    def test_triangle_apex_left_rate(self):
        """Test the rate at the apex belongs to the rising branch"""
        assert unit("triangle", 3.0, apex=1.0).rate(1.0) == 3.0

    def test_sinusoid(self):
        """Test the sinusoid rate is the analytic derivative"""
        profile = unit("sinusoid", 0.5, frequency=2.0)

        assert profile.value(0.125) == pytest.approx(0.5)
        assert profile.rate(0.0) == pytest.approx(0.5 * 4.0 * np.pi)
        assert profile.lipschitz == pytest.approx(2.0 * np.pi)

    def test_constant(self):
        """Test a constant profile has zero rate"""
        profile = unit("constant", 4.0)

        assert profile.value(0.9) == 4.0
        assert profile.rate(0.9) == 0.0
        assert profile.lipschitz == 0.0

    @pytest.mark.parametrize("kwargs,message", [
        ({"kind": "step"}, "unknown time profile"),
        ({"kind": "triangle", "apex": 0.0}, "apex"),
        ({"kind": "sinusoid", "frequency": -1.0}, "frequency"),
    ])
    def test_invalid_profiles(self, kwargs, message):
        """Test illegal profiles are rejected"""
        with pytest.raises(LoadError, match=message):
            TimeProfile(**kwargs)


class TestBoundaryDeformation:
    """Tests for ψ(t) and ψ̇(t)"""

    def test_ramp_on_rod(self):
        """Test ψ(t)(x) = t·x on the rod nodes"""
        mesh = build_rod_mesh(2.0, 4, 1.0)
        prog = LoadProgram(boundary=BoundaryDeformation(profile=unit("linear_ramp"), gradient=np.array([1.0])))

        np.testing.assert_allclose(boundary_value(prog, mesh, 0.5)[:, 0], 0.5 * mesh.nodes[:, 0])
        np.testing.assert_allclose(boundary_rate(prog, mesh, 0.5)[:, 0], mesh.nodes[:, 0])

    def test_twins_share_boundary_value(self):
        """Test ⊕ and ⊖ copies receive the same ψ"""
        mesh = build_rect_mesh_with_crack(4.0, 4.0, 4, 4, (0.0, 2.0), field_dimension=2)
        boundary = BoundaryDeformation(profile=unit("linear_ramp"), offset=np.array([0.1, 0.0]),
                                       gradient=np.array([[0.0, 0.0], [0.0, 1.0]]))
        values = boundary_value(LoadProgram(boundary=boundary), mesh, 1.0)

        np.testing.assert_array_equal(values[mesh.pairs.plus], values[mesh.pairs.minus])
        assert values.shape == (mesh.n_nodes, 2)

    def test_lipschitz(self):
        """Test the program Lipschitz constant is rate times max |spatial part|"""
        mesh = build_rod_mesh(2.0, 4, 1.0)
        prog = LoadProgram(boundary=BoundaryDeformation(profile=unit("linear_ramp", 3.0), gradient=np.array([1.0])))

        assert prog.lipschitz(mesh) == pytest.approx(6.0)

    def test_time_outside_horizon(self):
        """Test evaluation beyond T is rejected"""
        mesh = build_rod_mesh(2.0, 2, 1.0)

        with pytest.raises(LoadError, match="outside"):
            boundary_value(LoadProgram(horizon=1.0), mesh, 1.5)

    def test_nonpositive_horizon(self):
        """Test T must be positive"""
        with pytest.raises(LoadError, match="horizon"):
            LoadProgram(horizon=0.0)


class TestLoadFunctional:
    """Tests for L(t) and L̇(t)"""

    def test_body_force_unit_rod(self):
        """Test ⟨L, 1⟩ = 1 for f = 1 on a rod of unit length"""
        mesh = build_rod_mesh(1.0, 4, 0.5)
        prog = LoadProgram(body_force=LoadTerm(profile=unit(), value=[1.0]))

        assert load_apply(prog, mesh, 0.0, np.ones(mesh.n_nodes)) == pytest.approx(1.0)
        assert load_covector(prog, mesh, 0.0).sum() == pytest.approx(1.0)

    def test_crack_plus_traction(self):
        """Test a unit traction on the ⊕ side of a unit crack pairs to 2 with u ≡ 2"""
        mesh = build_rod_mesh(2.0, 2, 1.0)
        prog = LoadProgram(crack_plus=LoadTerm(profile=unit(), value=[1.0]))

        assert load_apply(prog, mesh, 0.0, np.full(mesh.n_nodes, 2.0)) == pytest.approx(2.0)

    def test_crack_traction_sees_one_side(self):
        """Test a ⊕-side traction ignores the ⊖ values"""
        mesh = build_rod_mesh(2.0, 2, 1.0)
        prog = LoadProgram(crack_plus=LoadTerm(profile=unit(), value=[1.0]))

        assert load_apply(prog, mesh, 0.0, np.array([0.0, 5.0, 0.0, 0.0])) == 0.0

    def test_stress_offset(self):
        """Test ∫σ₀·∇u = 1 for σ₀ = 1 and u(x) = x on the unit rod"""
        mesh = build_rod_mesh(1.0, 4, 0.5)
        prog = LoadProgram(stress_offset=LoadTerm(profile=unit(), value=[[1.0]]))

        assert load_apply(prog, mesh, 0.0, mesh.nodes[:, 0]) == pytest.approx(1.0)

    def test_stress_offset_plus_side(self):
        """Test a separate ⊕-side stress acts on the elements right of the interface"""
        mesh = build_rod_mesh(2.0, 4, 1.0)
        prog = LoadProgram(stress_offset=LoadTerm(profile=unit(), value=[[1.0]], plus_value=[[3.0]]))

        assert load_apply(prog, mesh, 0.0, mesh.nodes[:, 0]) == pytest.approx(1.0 + 3.0)

    def test_surface_force(self):
        """Test a unit surface force on both lateral sides of a 4 × 4 plate"""
        mesh = build_rect_mesh_with_crack(4.0, 4.0, 4, 4, (0.0, 1.0))
        prog = LoadProgram(surface_force=LoadTerm(profile=unit(), value=[1.0]))

        assert load_apply(prog, mesh, 0.0, np.ones(mesh.n_nodes)) == pytest.approx(8.0)

    def test_covector_matches_quadrature(self):
        """Test the assembled covector pairs with u exactly like direct quadrature"""
        mesh = build_rect_mesh_with_crack(4.0, 4.0, 8, 8, (0.0, 2.0))
        prog = LoadProgram(
            body_force=LoadTerm(profile=unit("linear_ramp", 0.7), value=[1.3]),
            stress_offset=LoadTerm(profile=unit("sinusoid", 0.2), value=[[0.4, -0.1]], plus_value=[[0.0, 0.5]]),
            surface_force=LoadTerm(profile=unit(), value=[-0.6]),
            crack_plus=LoadTerm(profile=unit("triangle", 1.0, apex=0.5), value=[0.8]),
            crack_minus=LoadTerm(profile=unit(), value=[0.2]),
        )
        u = np.random.default_rng(9).standard_normal(mesh.n_nodes)

        for t in (0.3, 0.8):
            assert float(np.sum(load_covector(prog, mesh, t)[:, 0] * u)) == pytest.approx(
                load_apply(prog, mesh, t, u), rel=1e-12, abs=1e-12)
            assert float(np.sum(load_rate_covector(prog, mesh, t)[:, 0] * u)) == pytest.approx(
                load_rate_apply(prog, mesh, t, u), rel=1e-12, abs=1e-12)

    def test_rate_is_derivative(self):
        """Test ⟨L̇(t), u⟩ against a central difference of ⟨L(t), u⟩"""
        mesh = build_rod_mesh(2.0, 4, 1.0)
        prog = LoadProgram(body_force=LoadTerm(profile=unit("sinusoid", 1.0), value=[1.0]))
        u = mesh.nodes[:, 0] ** 2
        step = 1e-6

        numeric = (load_apply(prog, mesh, 0.4 + step, u) - load_apply(prog, mesh, 0.4 - step, u)) / (2 * step)
        assert load_rate_apply(prog, mesh, 0.4, u) == pytest.approx(numeric, rel=1e-6)

    def test_has_loads(self):
        """Test a program with only zero terms reports no loads"""
        assert not LoadProgram().has_loads
        assert LoadProgram(body_force=LoadTerm(profile=unit(), value=[1.0])).has_loads
        assert not LoadProgram(body_force=LoadTerm(profile=unit(), value=[0.0])).has_loads


class TestPerEntityLoads:
    """Tests for load densities given per element, facet or interface node"""

    def test_body_force_per_element(self):
        """Test f(x) = x given per element integrates to ½ on the unit rod"""
        mesh = build_rod_mesh(1.0, 4, 0.5)
        centroids = mesh.nodes[mesh.elements].mean(axis=1)[:, :1]
        prog = LoadProgram(body_force=LoadTerm(profile=unit(), value=centroids))

        assert load_apply(prog, mesh, 0.0, np.ones(mesh.n_nodes)) == pytest.approx(0.5)
        assert load_covector(prog, mesh, 0.0).sum() == pytest.approx(0.5)

    def test_crack_traction_per_node(self):
        """Test g⊕(x) = x along a crack on [0, 2] pairs with u ≡ 1 to ∫x = 2"""
        mesh = build_rect_mesh_with_crack(4.0, 4.0, 8, 8, (0.0, 2.0))
        traction = mesh.nodes[mesh.pairs.plus, :1]
        prog = LoadProgram(crack_plus=LoadTerm(profile=unit(), value=traction))

        assert load_apply(prog, mesh, 0.0, np.ones(mesh.n_nodes)) == pytest.approx(2.0)
        np.testing.assert_allclose(load_covector(prog, mesh, 0.0)[mesh.pairs.plus],
                                   mesh.pairs.weights[:, None] * traction)

    def test_covector_matches_quadrature(self):
        """Test per-entity densities assemble consistently with direct quadrature"""
        mesh = build_rect_mesh_with_crack(4.0, 4.0, 8, 8, (0.0, 2.0), field_dimension=2)
        rng = np.random.default_rng(3)
        n_pairs, n_facets = len(mesh.pairs), mesh.neumann_facets.shape[0]
        prog = LoadProgram(
            body_force=LoadTerm(profile=unit("linear_ramp", 0.7), value=rng.standard_normal((mesh.n_elements, 2))),
            stress_offset=LoadTerm(profile=unit(), value=rng.standard_normal((mesh.n_elements, 2, 2))),
            surface_force=LoadTerm(profile=unit(), value=rng.standard_normal((n_facets, 2))),
            crack_plus=LoadTerm(profile=unit(), value=rng.standard_normal((n_pairs, 2))),
            crack_minus=LoadTerm(profile=unit("sinusoid", 0.3), value=rng.standard_normal((n_pairs, 2))),
        )
        prog.check_mesh(mesh)
        u = rng.standard_normal((mesh.n_nodes, 2))

        for t in (0.2, 0.9):
            assert float(np.sum(load_covector(prog, mesh, t) * u)) == pytest.approx(
                load_apply(prog, mesh, t, u), rel=1e-12, abs=1e-12)
            assert float(np.sum(load_rate_covector(prog, mesh, t) * u)) == pytest.approx(
                load_rate_apply(prog, mesh, t, u), rel=1e-12, abs=1e-12)

    def test_wrong_entity_count(self):
        """Test a body force with one row too few is rejected naming the entity"""
        mesh = build_rod_mesh(1.0, 4, 0.5)
        prog = LoadProgram(body_force=LoadTerm(profile=unit(), value=np.ones((3, 1))))

        with pytest.raises(LoadError, match="body_force.value.*per element"):
            prog.check_mesh(mesh)

    def test_wrong_pair_count(self):
        """Test a crack traction must give one entry per interface node"""
        mesh = build_rect_mesh_with_crack(4.0, 4.0, 8, 8, (0.0, 2.0))
        prog = LoadProgram(crack_minus=LoadTerm(profile=unit(), value=np.ones(len(mesh.pairs) + 1)))

        with pytest.raises(LoadError, match="per interface node"):
            prog.check_mesh(mesh)

    def test_boundary_gradient_shape(self):
        """Test a scalar gradient on a 2D mesh is rejected"""
        mesh = build_rect_mesh_with_crack(4.0, 4.0, 4, 4, (0.0, 2.0))
        prog = LoadProgram(boundary=BoundaryDeformation(gradient=np.array([0.5])))

        with pytest.raises(LoadError, match="boundary.gradient"):
            prog.check_mesh(mesh)
