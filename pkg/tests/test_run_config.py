"""
Tests for run and study configuration parsing
"""

import json
from pathlib import Path

import pytest

from config.run_config import ConfigError, RunConfig, StudyConfig

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def rod(**sections):
    data = {
        "name": "rod",
        "mesh": {"kind": "rod", "length": 2.0, "n_elements": 2, "interface_position": 1.0},
        "cohesive": {"variant": "linear", "b": 0.25},
        "loads": {"horizon": 1.0, "boundary": {"profile": {"kind": "linear_ramp", "scale": 1.0},
                                               "gradient": [[0.5]]}},
        "time": {"steps": 10},
    }
    data.update(sections)
    return data


class TestRunConfig:
    """Tests for RunConfig parsing and validation"""

    def test_defaults(self):
        """Test missing sections take their defaults"""
        cfg = RunConfig.from_dict({})

        assert cfg.name == "run"
        assert cfg.mesh.kind == "rod"
        assert cfg.solver.algorithm == "proximal_gradient_accelerated"
        assert cfg.verification.strict
        assert cfg.verification.euler_knots == "all"

    def test_rect_default_sides(self):
        """Test the rectangle clamps bottom and top and loads the lateral sides"""
        cfg = RunConfig.from_dict({"mesh": {"kind": "rect"}})

        assert cfg.mesh.dirichlet_sides == ["bottom", "top"]
        assert cfg.mesh.neumann_sides == ["left", "right"]

    def test_per_node_field(self):
        """Test cohesive parameters accept one value per interface node"""
        cfg = RunConfig.from_dict(rod(cohesive={"variant": "griffith", "a": [0.1, 0.2], "b": 0.5}))

        assert cfg.cohesive.a == [0.1, 0.2]
        assert cfg.cohesive.b == 0.5

    def test_negative_slope(self):
        """Test a negative cohesive slope names its field"""
        with pytest.raises(ConfigError, match=r"cohesive\.b must be >= 0"):
            RunConfig.from_dict(rod(cohesive={"variant": "linear", "b": -0.25}))

    def test_linear_law_activation(self):
        """Test the linear law refuses an activation term"""
        with pytest.raises(ConfigError, match=r"cohesive\.a must be 0"):
            RunConfig.from_dict(rod(cohesive={"variant": "linear", "a": 0.1, "b": 0.25}))

    def test_unknown_variant(self):
        """Test an unknown choice lists the valid ones"""
        with pytest.raises(ConfigError, match=r"mesh\.kind: unknown value 'disk'"):
            RunConfig.from_dict(rod(mesh={"kind": "disk"}))

    def test_wrong_type(self):
        """Test a string where a number is expected"""
        with pytest.raises(ConfigError, match=r"time\.steps: expected an integer"):
            RunConfig.from_dict(rod(time={"steps": "ten"}))

    def test_elasticity_needs_shear_modulus(self):
        """Test linear elasticity without μ is rejected"""
        with pytest.raises(ConfigError, match=r"bulk\.lame_mu must be > 0"):
            RunConfig.from_dict(rod(bulk={"variant": "linear_elasticity"}))

    def test_knots_end_at_horizon(self):
        """Test explicit knots must end at the horizon"""
        with pytest.raises(ConfigError, match="must end at loads.horizon"):
            RunConfig.from_dict(rod(time={"knots": [0.0, 0.5, 0.9]}))

    def test_knots_increasing(self):
        """Test explicit knots must start at 0 and increase"""
        with pytest.raises(ConfigError, match="increase strictly"):
            RunConfig.from_dict(rod(time={"knots": [0.0, 0.5, 0.5, 1.0]}))

    def test_euler_knots(self):
        """Test Euler knots accept all, none or indices only"""
        assert RunConfig.from_dict(rod(verification={"euler_knots": [0, 5]})).verification.euler_knots == [0, 5]

        with pytest.raises(ConfigError, match=r"verification\.euler_knots"):
            RunConfig.from_dict(rod(verification={"euler_knots": "some"}))

    def test_boolean_flags(self):
        """Test switches must be JSON booleans"""
        with pytest.raises(ConfigError, match=r"solver\.nonconvex_enrichment: expected true or false"):
            RunConfig.from_dict(rod(solver={"nonconvex_enrichment": 1}))

    def test_stall_options(self):
        """Test the FISTA stall detection options and their bounds"""
        cfg = RunConfig.from_dict(rod(solver={"stall_window": 200, "stall_factor": 0.25, "schur_polish": False}))

        assert (cfg.solver.stall_window, cfg.solver.stall_factor, cfg.solver.schur_polish) == (200, 0.25, False)
        with pytest.raises(ConfigError, match=r"solver\.stall_factor must be < 1"):
            RunConfig.from_dict(rod(solver={"stall_factor": 1.0}))
        with pytest.raises(ConfigError, match=r"solver\.stall_window"):
            RunConfig.from_dict(rod(solver={"stall_window": 0}))

    def test_save_and_load(self, tmp_path):
        """Test a saved configuration loads back unchanged"""
        cfg = RunConfig.from_dict(rod(verification={"snapshots": [0.5]}))
        cfg.save(tmp_path / "cfg.json")

        assert RunConfig.load(tmp_path / "cfg.json") == cfg

    def test_load_missing(self, tmp_path):
        """Test a missing file is a configuration error"""
        with pytest.raises(ConfigError, match="not found"):
            RunConfig.load(tmp_path / "absent.json")

    def test_load_malformed(self, tmp_path):
        """Test a file that is not JSON is a configuration error"""
        path = tmp_path / "bad.json"
        path.write_text("{\"name\": ")

        with pytest.raises(ConfigError, match="not valid JSON"):
            RunConfig.load(path)

    @pytest.mark.parametrize("name", ["rod_linear", "rod_griffith", "rod_triangle", "plate_scalar",
                                      "plate_elastic"])
    def test_shipped_configs(self, name):
        """Test every shipped configuration validates"""
        cfg = RunConfig.load(CONFIGS / f"{name}.json")

        assert cfg.name


class TestStudyConfig:
    """Tests for StudyConfig"""

    def test_inline_base(self):
        """Test an inline base configuration"""
        spec = StudyConfig.from_dict({"base_config": rod(), "levels": [10, 20, 40], "checkpoints": [0.5]})

        assert spec.base.name == "rod"
        assert spec.oracle == "none"
        assert spec.min_rate == 0.9
        assert spec.min_balance_factor == 1.8

    def test_base_relative_to_study(self, tmp_path):
        """Test a base path resolves against the study file's directory"""
        (tmp_path / "base.json").write_text(json.dumps(rod()))
        (tmp_path / "study.json").write_text(json.dumps({
            "base_config": "base.json", "levels": [5, 10, 20], "checkpoints": [0.2, 0.8],
            "oracle": "analytic_1d_linear",
        }))
        spec = StudyConfig.load(tmp_path / "study.json")

        assert spec.base.time.steps == 10
        assert spec.to_dict()["base_config"] == "base.json"

    def test_shipped_study(self):
        """Test the shipped study reads its base configuration"""
        spec = StudyConfig.load(CONFIGS / "study_rod_linear.json")

        assert spec.base.name == "rod_linear"
        assert spec.levels == [25, 50, 100, 200]

    def test_shipped_plate_study(self):
        """Test the shipped plate study doubles the scalar plate run twice"""
        spec = StudyConfig.load(CONFIGS / "study_plate_scalar.json")

        assert spec.base.name == "plate_scalar"
        assert spec.base.mesh.kind == "rect"
        assert spec.levels == [100, 200, 400]
        assert spec.min_balance_factor == 1.8

    def test_missing_base(self):
        """Test a study without a base configuration"""
        with pytest.raises(ConfigError, match="base_config"):
            StudyConfig.from_dict({"levels": [10, 20, 40]})

    def test_levels_type(self):
        """Test levels must be a list of integers"""
        with pytest.raises(ConfigError, match="levels"):
            StudyConfig.from_dict({"base_config": rod(), "levels": [10, 20.5, 40]})

    def test_unknown_oracle(self):
        """Test an unknown oracle name"""
        with pytest.raises(ConfigError, match=r"study\.oracle"):
            StudyConfig.from_dict({"base_config": rod(), "levels": [10, 20, 40], "oracle": "exact"})
