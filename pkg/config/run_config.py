"""
Run configuration: the JSON document read by ``app.py run`` and ``app.py study``

Every section is a dataclass with from_dict/to_dict. Validation errors name
the offending field with its dotted path, e.g. ``cohesive.b``.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

logger = logging.getLogger(__name__)

MESH_KINDS = ("rod", "rect")
INITIAL_STATES = ("lift", "solve")
ORACLES = ("analytic_1d_linear", "analytic_1d_griffith", "none")


class ConfigError(ValueError):
    """Raised for an unreadable or invalid run configuration"""
    pass


def _section(data: Any, path: str) -> Dict:
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object, got {type(data).__name__}")
    return data


def _number(data: Dict, key: str, path: str, default: Optional[float] = None,
            minimum: Optional[float] = None, strict: bool = False) -> Optional[float]:
    value = data.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number, got {value!r}")
    value = float(value)
    if minimum is not None and (value <= minimum if strict else value < minimum):
        relation = ">" if strict else ">="
        raise ConfigError(f"{path}.{key} must be {relation} {minimum!r}, got {value!r}")
    return value


def _integer(data: Dict, key: str, path: str, default: int, minimum: int) -> int:
    value = data.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}.{key}: expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{path}.{key} must be >= {minimum}, got {value!r}")
    return value


def _choice(data: Dict, key: str, path: str, default: str, choices) -> str:
    value = data.get(key, default)
    if value not in choices:
        raise ConfigError(f"{path}.{key}: unknown value {value!r}; expected one of {', '.join(choices)}")
    return value


def _numbers(value: Any, path: str) -> Optional[List]:
    """Nested list of numbers (vector or matrix), or None"""
    if value is None:
        return None
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, list):
        raise ConfigError(f"{path}: expected a number or a list of numbers, got {value!r}")
    return [_numbers(v, f"{path}[{i}]") for i, v in enumerate(value)]


def _nonnegative_field(value: Any, path: str) -> Union[float, List[float]]:
    """Scalar or per-node list of nonnegative numbers"""
    values = _numbers(value, path)
    flat = values if isinstance(values, list) else [values]
    for i, v in enumerate(flat):
        if isinstance(v, list):
            raise ConfigError(f"{path}[{i}]: expected a number")
        if v < 0.0:
            raise ConfigError(f"{path} must be >= 0, got {v!r}")
    return values


@dataclass
class MeshSpec:
    """Rod (1D) or rectangle with a straight crack (2D)"""

    kind: str = "rod"
    length: float = 2.0
    n_elements: int = 2
    interface_position: float = 1.0
    width: float = 4.0
    height: float = 4.0
    nx: int = 16
    ny: int = 16
    crack_x_range: List[float] = field(default_factory=lambda: [0.0, 1.0])
    dirichlet_sides: List[str] = field(default_factory=lambda: ["left", "right"])
    neumann_sides: List[str] = field(default_factory=list)
    field_dimension: int = 1

    @classmethod
    def from_dict(cls, data: Dict, path: str = "mesh") -> "MeshSpec":
        data = _section(data, path)
        kind = _choice(data, "kind", path, "rod", MESH_KINDS)
        default_dirichlet = ["left", "right"] if kind == "rod" else ["bottom", "top"]
        default_neumann = [] if kind == "rod" else ["left", "right"]
        crack = _numbers(data.get("crack_x_range", [0.0, 1.0]), f"{path}.crack_x_range")
        if not isinstance(crack, list) or len(crack) != 2 or crack[0] >= crack[1]:
            raise ConfigError(f"{path}.crack_x_range: expected [x0, x1] with x0 < x1, got {crack!r}")
        sides = {}
        for key, default in (("dirichlet_sides", default_dirichlet), ("neumann_sides", default_neumann)):
            value = data.get(key, default)
            if not isinstance(value, list) or not all(isinstance(s, str) for s in value):
                raise ConfigError(f"{path}.{key}: expected a list of side names, got {value!r}")
            sides[key] = list(value)
        return cls(
            kind=kind,
            length=_number(data, "length", path, 2.0, minimum=0.0, strict=True),
            n_elements=_integer(data, "n_elements", path, 2, 2),
            interface_position=_number(data, "interface_position", path, 1.0),
            width=_number(data, "width", path, 4.0, minimum=0.0, strict=True),
            height=_number(data, "height", path, 4.0, minimum=0.0, strict=True),
            nx=_integer(data, "nx", path, 16, 1),
            ny=_integer(data, "ny", path, 16, 2),
            crack_x_range=crack,
            dirichlet_sides=sides["dirichlet_sides"],
            neumann_sides=sides["neumann_sides"],
            field_dimension=_integer(data, "field_dimension", path, 1, 1),
        )

    def to_dict(self) -> Dict:
        return dict(self.__dict__)


@dataclass
class BulkSpec:
    variant: str = "quadratic_scalar"
    p: float = 2.0
    lame_lambda: float = 0.0
    lame_mu: float = 0.0
    modulus: Union[float, List[float]] = 1.0

    @classmethod
    def from_dict(cls, data: Dict, path: str = "bulk") -> "BulkSpec":
        data = _section(data, path)
        variant = _choice(data, "variant", path, "quadratic_scalar",
                          ("quadratic_scalar", "p_power", "linear_elasticity"))
        p = _number(data, "p", path, 2.0, minimum=1.0, strict=True)
        mu = _number(data, "lame_mu", path, 0.0, minimum=0.0)
        if variant == "linear_elasticity" and mu <= 0.0:
            raise ConfigError(f"{path}.lame_mu must be > 0 for linear_elasticity, got {mu!r}")
        modulus = _numbers(data.get("modulus", 1.0), f"{path}.modulus")
        flat = modulus if isinstance(modulus, list) else [modulus]
        if any(isinstance(v, list) or v <= 0.0 for v in flat):
            raise ConfigError(f"{path}.modulus must be positive (scalar or one value per element)")
        return cls(variant=variant, p=p, lame_lambda=_number(data, "lame_lambda", path, 0.0),
                   lame_mu=mu, modulus=modulus)

    def to_dict(self) -> Dict:
        return dict(self.__dict__)


@dataclass
class CohesiveSpec:
    variant: str = "linear"
    a: Union[float, List[float]] = 0.0
    b: Union[float, List[float]] = 0.0
    c: float = 1.0

    @classmethod
    def from_dict(cls, data: Dict, path: str = "cohesive") -> "CohesiveSpec":
        data = _section(data, path)
        variant = _choice(data, "variant", path, "linear", ("linear", "griffith", "smooth_saturating"))
        a = _nonnegative_field(data.get("a", 0.0), f"{path}.a")
        if variant == "linear" and any(v != 0.0 for v in (a if isinstance(a, list) else [a])):
            raise ConfigError(f"{path}.a must be 0 for the linear law")
        return cls(
            variant=variant,
            a=a,
            b=_nonnegative_field(data.get("b", 0.0), f"{path}.b"),
            c=_number(data, "c", path, 1.0, minimum=0.0, strict=True),
        )

    def to_dict(self) -> Dict:
        return dict(self.__dict__)


@dataclass
class ProfileSpec:
    kind: str = "constant"
    scale: float = 0.0
    apex: float = 0.5
    frequency: float = 1.0

    @classmethod
    def from_dict(cls, data: Dict, path: str) -> "ProfileSpec":
        data = _section(data, path)
        return cls(
            kind=_choice(data, "kind", path, "constant", ("constant", "linear_ramp", "triangle", "sinusoid")),
            scale=_number(data, "scale", path, 0.0),
            apex=_number(data, "apex", path, 0.5, minimum=0.0, strict=True),
            frequency=_number(data, "frequency", path, 1.0, minimum=0.0, strict=True),
        )

    def to_dict(self) -> Dict:
        return dict(self.__dict__)


@dataclass
class BoundarySpec:
    """ψ(t)(x) = profile(t)·(offset + gradient·x)"""

    profile: ProfileSpec = field(default_factory=ProfileSpec)
    offset: Optional[List[float]] = None
    gradient: Optional[List] = None

    @classmethod
    def from_dict(cls, data: Dict, path: str = "loads.boundary") -> "BoundarySpec":
        data = _section(data, path)
        return cls(
            profile=ProfileSpec.from_dict(data.get("profile"), f"{path}.profile"),
            offset=_numbers(data.get("offset"), f"{path}.offset"),
            gradient=_numbers(data.get("gradient"), f"{path}.gradient"),
        )

    def to_dict(self) -> Dict:
        return {"profile": self.profile.to_dict(), "offset": self.offset, "gradient": self.gradient}


@dataclass
class ForceSpec:
    """
    Load density p(t)·value (optionally a distinct ⊕-side value)

    ``value`` is one density, or a nested list with one per element (f, H),
    per Neumann facet (g) or per interface node (crack tractions). Shapes are
    checked against the mesh when the problem is built.
    """

    profile: ProfileSpec = field(default_factory=ProfileSpec)
    value: Optional[List] = None
    plus_value: Optional[List] = None

    @classmethod
    def from_dict(cls, data: Dict, path: str) -> "ForceSpec":
        data = _section(data, path)
        return cls(
            profile=ProfileSpec.from_dict(data.get("profile"), f"{path}.profile"),
            value=_numbers(data.get("value"), f"{path}.value"),
            plus_value=_numbers(data.get("plus_value"), f"{path}.plus_value"),
        )

    def to_dict(self) -> Dict:
        return {"profile": self.profile.to_dict(), "value": self.value, "plus_value": self.plus_value}


LOAD_TERMS = ("body_force", "stress_offset", "surface_force", "crack_plus", "crack_minus")


@dataclass
class LoadSpec:
    horizon: float = 1.0
    boundary: BoundarySpec = field(default_factory=BoundarySpec)
    body_force: ForceSpec = field(default_factory=ForceSpec)
    stress_offset: ForceSpec = field(default_factory=ForceSpec)
    surface_force: ForceSpec = field(default_factory=ForceSpec)
    crack_plus: ForceSpec = field(default_factory=ForceSpec)
    crack_minus: ForceSpec = field(default_factory=ForceSpec)

    @classmethod
    def from_dict(cls, data: Dict, path: str = "loads") -> "LoadSpec":
        data = _section(data, path)
        terms = {name: ForceSpec.from_dict(data.get(name), f"{path}.{name}") for name in LOAD_TERMS}
        return cls(
            horizon=_number(data, "horizon", path, 1.0, minimum=0.0, strict=True),
            boundary=BoundarySpec.from_dict(data.get("boundary"), f"{path}.boundary"),
            **terms,
        )

    def to_dict(self) -> Dict:
        out = {"horizon": self.horizon, "boundary": self.boundary.to_dict()}
        out.update({name: getattr(self, name).to_dict() for name in LOAD_TERMS})
        return out


@dataclass
class TimeGridSpec:
    """Uniform grid of ``steps`` steps, or explicit ``knots``"""

    steps: int = 100
    knots: Optional[List[float]] = None

    @classmethod
    def from_dict(cls, data: Dict, path: str = "time") -> "TimeGridSpec":
        data = _section(data, path)
        knots = _numbers(data.get("knots"), f"{path}.knots")
        if knots is not None:
            if not isinstance(knots, list) or len(knots) < 2:
                raise ConfigError(f"{path}.knots: expected at least two knots")
            if knots[0] != 0.0 or any(b <= a for a, b in zip(knots, knots[1:])):
                raise ConfigError(f"{path}.knots must start at 0 and increase strictly")
        return cls(steps=_integer(data, "steps", path, 100, 1), knots=knots)

    def to_dict(self) -> Dict:
        return dict(self.__dict__)


@dataclass
class InitialSpec:
    """γ⁰ as a constant or a JSON list of per-node values, and the initial state rule"""

    gamma: float = 0.0
    gamma_file: Optional[str] = None
    state: str = "lift"

    @classmethod
    def from_dict(cls, data: Dict, path: str = "initial") -> "InitialSpec":
        data = _section(data, path)
        gamma_file = data.get("gamma_file")
        if gamma_file is not None and not isinstance(gamma_file, str):
            raise ConfigError(f"{path}.gamma_file: expected a path, got {gamma_file!r}")
        return cls(
            gamma=_number(data, "gamma", path, 0.0, minimum=0.0),
            gamma_file=gamma_file,
            state=_choice(data, "state", path, "lift", INITIAL_STATES),
        )

    def to_dict(self) -> Dict:
        return dict(self.__dict__)


@dataclass
class SolverSpec:
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

    @classmethod
    def from_dict(cls, data: Dict, path: str = "solver") -> "SolverSpec":
        data = _section(data, path)
        flags = {}
        for key in ("restart_on_nonmonotone", "nonconvex_enrichment", "schur_polish"):
            value = data.get(key, True)
            if not isinstance(value, bool):
                raise ConfigError(f"{path}.{key}: expected true or false, got {value!r}")
            flags[key] = value
        stall_factor = _number(data, "stall_factor", path, 0.5, minimum=0.0)
        if stall_factor >= 1.0:
            raise ConfigError(f"{path}.stall_factor must be < 1, got {stall_factor!r}")
        return cls(
            algorithm=_choice(data, "algorithm", path, "proximal_gradient_accelerated",
                              ("proximal_gradient_accelerated", "schur_coordinate_descent")),
            max_iterations=_integer(data, "max_iterations", path, 20000, 1),
            objective_tolerance=_number(data, "objective_tolerance", path, 1e-13, minimum=0.0, strict=True),
            residual_tolerance=_number(data, "residual_tolerance", path, 1e-9, minimum=0.0, strict=True),
            power_iterations=_integer(data, "power_iterations", path, 50, 1),
            safety_factor=_number(data, "safety_factor", path, 1.05, minimum=1.0),
            stall_window=_integer(data, "stall_window", path, 500, 1),
            stall_factor=stall_factor,
            **flags,
        )

    def to_dict(self) -> Dict:
        return dict(self.__dict__)


@dataclass
class VerificationSpec:
    """Certificates and diagnostics computed alongside a run"""

    strict: bool = True
    seed: int = 0
    competitors: int = 100
    certificate_every: int = 10
    euler_knots: Union[str, List[int]] = "all"
    euler_example: bool = False
    snapshots: List[float] = field(default_factory=list)
    apriori: bool = True

    @classmethod
    def from_dict(cls, data: Dict, path: str = "verification") -> "VerificationSpec":
        data = _section(data, path)
        flags = {}
        for key, default in (("strict", True), ("euler_example", False), ("apriori", True)):
            value = data.get(key, default)
            if not isinstance(value, bool):
                raise ConfigError(f"{path}.{key}: expected true or false, got {value!r}")
            flags[key] = value
        knots = data.get("euler_knots", "all")
        if knots not in ("all", "none") and not (
                isinstance(knots, list) and all(isinstance(k, int) and k >= 0 for k in knots)):
            raise ConfigError(f"{path}.euler_knots: expected \"all\", \"none\" or a list of knot indices")
        snapshots = _numbers(data.get("snapshots", []), f"{path}.snapshots")
        if not isinstance(snapshots, list):
            snapshots = [snapshots]
        return cls(
            seed=_integer(data, "seed", path, 0, 0),
            competitors=_integer(data, "competitors", path, 100, 0),
            certificate_every=_integer(data, "certificate_every", path, 10, 1),
            euler_knots=knots,
            snapshots=snapshots,
            **flags,
        )

    def to_dict(self) -> Dict:
        return dict(self.__dict__)


@dataclass
class RunConfig:
    """Complete description of one evolution run"""

    name: str = "run"
    mesh: MeshSpec = field(default_factory=MeshSpec)
    bulk: BulkSpec = field(default_factory=BulkSpec)
    cohesive: CohesiveSpec = field(default_factory=CohesiveSpec)
    loads: LoadSpec = field(default_factory=LoadSpec)
    time: TimeGridSpec = field(default_factory=TimeGridSpec)
    initial: InitialSpec = field(default_factory=InitialSpec)
    solver: SolverSpec = field(default_factory=SolverSpec)
    verification: VerificationSpec = field(default_factory=VerificationSpec)
    output_dir: Optional[str] = None

    @classmethod
    def from_dict(cls, data: Dict) -> "RunConfig":
        """
        Parse and validate a configuration document

        Raises:
            ConfigError: Naming the first invalid field
        """
        data = _section(data, "config")
        name = data.get("name", "run")
        if not isinstance(name, str) or not name:
            raise ConfigError(f"name: expected a non-empty string, got {name!r}")
        output_dir = data.get("output_dir")
        if output_dir is not None and not isinstance(output_dir, str):
            raise ConfigError(f"output_dir: expected a path, got {output_dir!r}")
        config = cls(
            name=name,
            mesh=MeshSpec.from_dict(data.get("mesh")),
            bulk=BulkSpec.from_dict(data.get("bulk")),
            cohesive=CohesiveSpec.from_dict(data.get("cohesive")),
            loads=LoadSpec.from_dict(data.get("loads")),
            time=TimeGridSpec.from_dict(data.get("time")),
            initial=InitialSpec.from_dict(data.get("initial")),
            solver=SolverSpec.from_dict(data.get("solver")),
            verification=VerificationSpec.from_dict(data.get("verification")),
            output_dir=output_dir,
        )
        if config.time.knots is not None and config.time.knots[-1] != config.loads.horizon:
            raise ConfigError(
                f"time.knots must end at loads.horizon = {config.loads.horizon!r}, got {config.time.knots[-1]!r}"
            )
        return config

    def to_dict(self) -> Dict:
        return {
            "name": self.name,
            "mesh": self.mesh.to_dict(),
            "bulk": self.bulk.to_dict(),
            "cohesive": self.cohesive.to_dict(),
            "loads": self.loads.to_dict(),
            "time": self.time.to_dict(),
            "initial": self.initial.to_dict(),
            "solver": self.solver.to_dict(),
            "verification": self.verification.to_dict(),
            "output_dir": self.output_dir,
        }

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunConfig":
        """
        Read a configuration file

        Raises:
            ConfigError: If the file is missing, not JSON, or invalid
        """
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except FileNotFoundError as exc:
            raise ConfigError(f"configuration file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        logger.debug("loaded configuration from %s", path)
        return cls.from_dict(data)

    def save(self, path: Union[str, Path]):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)


@dataclass
class StudyConfig:
    """Time-refinement study over one base configuration"""

    base: RunConfig
    levels: List[int]
    checkpoints: List[float]
    oracle: str = "none"
    min_rate: float = 0.9
    min_balance_factor: float = 1.8
    base_config: Optional[str] = None

    @classmethod
    def from_dict(cls, data: Dict, root: Optional[Path] = None) -> "StudyConfig":
        data = _section(data, "study")
        base_ref = data.get("base_config")
        if isinstance(base_ref, str):
            base_path = Path(base_ref)
            if root is not None and not base_path.is_absolute():
                base_path = root / base_path
            base = RunConfig.load(base_path)
        elif isinstance(base_ref, dict):
            base = RunConfig.from_dict(base_ref)
            base_ref = None
        else:
            raise ConfigError("base_config: expected a path or an inline configuration object")
        levels = data.get("levels")
        if not isinstance(levels, list) or not all(isinstance(k, int) and not isinstance(k, bool) for k in levels):
            raise ConfigError(f"levels: expected a list of step counts, got {levels!r}")
        checkpoints = _numbers(data.get("checkpoints", []), "checkpoints")
        if not isinstance(checkpoints, list):
            checkpoints = [checkpoints]
        return cls(
            base=base,
            levels=levels,
            checkpoints=checkpoints,
            oracle=_choice(data, "oracle", "study", "none", ORACLES),
            min_rate=_number(data, "min_rate", "study", 0.9),
            min_balance_factor=_number(data, "min_balance_factor", "study", 1.8),
            base_config=base_ref,
        )

    def to_dict(self) -> Dict:
        return {
            "base_config": self.base_config or self.base.to_dict(),
            "levels": list(self.levels),
            "checkpoints": list(self.checkpoints),
            "oracle": self.oracle,
            "min_rate": self.min_rate,
            "min_balance_factor": self.min_balance_factor,
        }

    @classmethod
    def load(cls, path: Union[str, Path]) -> "StudyConfig":
        path = Path(path)
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except FileNotFoundError as exc:
            raise ConfigError(f"study file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(data, root=path.parent)
