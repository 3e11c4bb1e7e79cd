"""
Load programs: prescribed boundary deformation ψ(t) and the load functional L(t)

Every term is a time profile times a fixed spatial part, so values and
time derivatives are both analytic. A spatial part is either uniform or
given per entity: f and the stress offset per element, g per Neumann
facet, the crack tractions per interface node pair.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from src.geometry.mesh import Mesh

logger = logging.getLogger(__name__)

PROFILE_KINDS = ("constant", "linear_ramp", "triangle", "sinusoid")
LOAD_TERMS = ("body_force", "stress_offset", "surface_force", "crack_plus", "crack_minus")


class LoadError(ValueError):
    """Raised for illegal load programs or evaluation outside [0, T]"""
    pass


@dataclass(frozen=True)
class TimeProfile:
    """Scalar time profile p(t) with analytic rate.

    constant:    p(t) = scale
    linear_ramp: p(t) = scale·t
    triangle:    p(t) = scale·t up to ``apex``, then scale·(2·apex − t)
    sinusoid:    p(t) = scale·sin(2π·frequency·t)

    At the apex of the triangle the rate of the left branch is returned.
    """

    kind: str = "constant"
    scale: float = 0.0
    apex: float = 0.5
    frequency: float = 1.0

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise LoadError(f"unknown time profile {self.kind!r}; expected one of {', '.join(PROFILE_KINDS)}")
        if self.kind == "triangle" and self.apex <= 0.0:
            raise LoadError("triangle apex must be positive")
        if self.kind == "sinusoid" and self.frequency <= 0.0:
            raise LoadError("sinusoid frequency must be positive")

    def value(self, t: float) -> float:
        if self.kind == "constant":
            return self.scale
        if self.kind == "linear_ramp":
            return self.scale * t
        if self.kind == "triangle":
            return self.scale * (t if t <= self.apex else 2.0 * self.apex - t)
        return self.scale * np.sin(2.0 * np.pi * self.frequency * t)

    def rate(self, t: float) -> float:
        if self.kind == "constant":
            return 0.0
        if self.kind == "linear_ramp":
            return self.scale
        if self.kind == "triangle":
            return self.scale if t <= self.apex else -self.scale
        omega = 2.0 * np.pi * self.frequency
        return self.scale * omega * np.cos(omega * t)

    @property
    def lipschitz(self) -> float:
        if self.kind == "constant":
            return 0.0
        if self.kind == "sinusoid":
            return abs(self.scale) * 2.0 * np.pi * self.frequency
        return abs(self.scale)

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "scale": self.scale, "apex": self.apex, "frequency": self.frequency}


@dataclass
class BoundaryDeformation:
    """ψ(t)(x) = p(t)·(offset + gradient·x), identical on ⊕/⊖ twins"""

    profile: TimeProfile = field(default_factory=TimeProfile)
    offset: Optional[np.ndarray] = None
    gradient: Optional[np.ndarray] = None

    def spatial(self, mesh: Mesh) -> np.ndarray:
        m, d = mesh.field_dimension, mesh.dimension
        offset = np.zeros(m) if self.offset is None else np.asarray(self.offset, dtype=float).reshape(m)
        gradient = np.zeros((m, d)) if self.gradient is None else np.asarray(self.gradient, dtype=float).reshape(m, d)
        return offset[None, :] + mesh.nodes @ gradient.T


@dataclass
class LoadTerm:
    """
    Load density p(t)·value

    ``value`` holds one density for the whole term or one per entity (see
    LoadProgram.check_mesh). ``plus_value`` replaces it on ⊕-side elements
    for the stress offset.
    """

    profile: TimeProfile = field(default_factory=TimeProfile)
    value: Optional[np.ndarray] = None
    plus_value: Optional[np.ndarray] = None

    def is_zero(self) -> bool:
        values = [v for v in (self.value, self.plus_value) if v is not None]
        return self.profile.scale == 0.0 or all(not np.any(np.asarray(v)) for v in values)


@dataclass
class LoadProgram:
    """Time-dependent data of the evolution on [0, horizon]"""

    horizon: float = 1.0
    boundary: BoundaryDeformation = field(default_factory=BoundaryDeformation)
    body_force: LoadTerm = field(default_factory=LoadTerm)
    stress_offset: LoadTerm = field(default_factory=LoadTerm)
    surface_force: LoadTerm = field(default_factory=LoadTerm)
    crack_plus: LoadTerm = field(default_factory=LoadTerm)
    crack_minus: LoadTerm = field(default_factory=LoadTerm)

    def __post_init__(self):
        if self.horizon <= 0.0:
            raise LoadError("time horizon T must be positive")

    def check_time(self, t: float):
        if t < -1e-12 * self.horizon or t > self.horizon * (1.0 + 1e-12):
            raise LoadError(f"time {t!r} outside [0, {self.horizon!r}]")

    @property
    def has_loads(self) -> bool:
        return not all(getattr(self, name).is_zero() for name in LOAD_TERMS)

    def check_mesh(self, mesh: Mesh):
        """
        Check the boundary deformation and every load term fit the mesh

        Besides a single uniform density a term may carry one entry per entity:
            body_force        (n_elements, m)
            stress_offset     (n_elements, m, d)
            surface_force     (n_neumann_facets, m)
            crack_plus/minus  (n_pairs, m)

        Raises:
            LoadError: Naming the first term whose shape does not fit
        """
        m, d = mesh.field_dimension, mesh.dimension
        for name, value, shape in (("offset", self.boundary.offset, (m,)),
                                   ("gradient", self.boundary.gradient, (m, d))):
            if value is not None and np.asarray(value).size != m * (d if name == "gradient" else 1):
                raise LoadError(f"boundary.{name} has {np.asarray(value).size} values; expected shape {shape}")
        for name in LOAD_TERMS:
            _density(self, name, mesh)
            _density(self, name, mesh, plus=True)

    def lipschitz(self, mesh: Mesh) -> float:
        """Lipschitz constant of t ↦ ψ(t) in the max norm"""
        return self.boundary.profile.lipschitz * float(np.abs(self.boundary.spatial(mesh)).max(initial=0.0))


def boundary_value(prog: LoadProgram, mesh: Mesh, t: float) -> np.ndarray:
    """
    ψ(t) at every node, shape (N, m)

    Raises:
        LoadError: If t is outside [0, T]
    """
    prog.check_time(t)
    return prog.boundary.profile.value(t) * prog.boundary.spatial(mesh)


def boundary_rate(prog: LoadProgram, mesh: Mesh, t: float) -> np.ndarray:
    """ψ̇(t) at every node, left-branch rate at kinks"""
    prog.check_time(t)
    return prog.boundary.profile.rate(t) * prog.boundary.spatial(mesh)


def _layout(name: str, mesh: Mesh) -> Tuple[int, Tuple[int, ...], str]:
    """(entity count, per-entity shape, entity name) of a load term on a mesh"""
    m, d = mesh.field_dimension, mesh.dimension
    if name == "body_force":
        return mesh.n_elements, (m,), "element"
    if name == "stress_offset":
        return mesh.n_elements, (m, d), "element"
    if name == "surface_force":
        return int(mesh.neumann_facets.shape[0]), (m,), "Neumann facet"
    return len(mesh.pairs), (m,), "interface node"


def _density(prog: LoadProgram, name: str, mesh: Mesh, plus: bool = False) -> np.ndarray:
    """
    Spatial part of a load term, one entry per entity

    Raises:
        LoadError: If the value is neither uniform nor one entry per entity
    """
    term = getattr(prog, name)
    count, shape, entity = _layout(name, mesh)
    value = term.plus_value if plus and term.plus_value is not None else term.value
    if value is None:
        return np.zeros((count,) + shape)
    array = np.asarray(value, dtype=float)
    size = int(np.prod(shape))
    if array.size == size:
        return np.broadcast_to(array.reshape(shape), (count,) + shape)
    if array.size == count * size:
        return array.reshape((count,) + shape)
    label = f"{name}.plus_value" if plus and term.plus_value is not None else f"{name}.value"
    raise LoadError(f"{label} has shape {array.shape}; expected {shape} or ({count}, {', '.join(map(str, shape))}) "
                    f"with one entry per {entity}")


def _stress(prog: LoadProgram, mesh: Mesh, scale: float) -> np.ndarray:
    base = _density(prog, "stress_offset", mesh)
    plus = _density(prog, "stress_offset", mesh, plus=True)
    return np.where((mesh.element_sides > 0)[:, None, None], plus, base) * scale


def _spatial_covector(prog: LoadProgram, mesh: Mesh, scales: Dict[str, float]) -> np.ndarray:
    m = mesh.field_dimension
    k = mesh.dimension + 1
    out = np.zeros((mesh.n_nodes, m))

    if scales["body_force"]:
        f = scales["body_force"] * _density(prog, "body_force", mesh)
        local = np.broadcast_to((mesh.volumes / k)[:, None, None] * f[:, None, :], (mesh.n_elements, k, m))
        out += mesh.assemble(np.array(local))

    if scales["stress_offset"]:
        stress = _stress(prog, mesh, scales["stress_offset"])
        local = np.einsum("emd,ekd->ekm", stress * mesh.volumes[:, None, None], mesh.shape_gradients)
        out += mesh.assemble(local)

    if scales["surface_force"] and mesh.neumann_facets.size:
        g = scales["surface_force"] * _density(prog, "surface_force", mesh)
        n_facet = mesh.neumann_facets.shape[1]
        local = (mesh.neumann_weights / n_facet)[:, None, None] * g[:, None, :]
        np.add.at(out, mesh.neumann_facets, np.broadcast_to(local, mesh.neumann_facets.shape + (m,)))

    pairs = mesh.pairs
    if len(pairs):
        if scales["crack_plus"]:
            g_plus = scales["crack_plus"] * _density(prog, "crack_plus", mesh)
            np.add.at(out, pairs.plus, pairs.weights[:, None] * g_plus)
        if scales["crack_minus"]:
            g_minus = scales["crack_minus"] * _density(prog, "crack_minus", mesh)
            np.add.at(out, pairs.minus, pairs.weights[:, None] * g_minus)
    return out


def _term_scales(prog: LoadProgram, t: float, rate: bool) -> Dict[str, float]:
    scales = {}
    for name in LOAD_TERMS:
        profile = getattr(prog, name).profile
        scales[name] = profile.rate(t) if rate else profile.value(t)
    return scales


def load_covector(prog: LoadProgram, mesh: Mesh, t: float) -> np.ndarray:
    """
    Assembled linear form L(t) as a nodal covector, shape (N, m)

    Raises:
        LoadError: If t is outside [0, T]
    """
    prog.check_time(t)
    return _spatial_covector(prog, mesh, _term_scales(prog, t, rate=False))


def load_rate_covector(prog: LoadProgram, mesh: Mesh, t: float) -> np.ndarray:
    """Assembled L̇(t)"""
    prog.check_time(t)
    return _spatial_covector(prog, mesh, _term_scales(prog, t, rate=True))


def _quadrature(prog: LoadProgram, mesh: Mesh, u: np.ndarray, scales: Dict[str, float]) -> float:
    total = 0.0

    if scales["body_force"]:
        f = scales["body_force"] * _density(prog, "body_force", mesh)
        mean_u = u[mesh.elements].mean(axis=1)
        total += float(np.sum(mesh.volumes * np.sum(mean_u * f, axis=1)))

    if scales["stress_offset"]:
        stress = _stress(prog, mesh, scales["stress_offset"])
        total += float(np.sum(mesh.volumes * np.sum(stress * mesh.field_gradient(u), axis=(-2, -1))))

    if scales["surface_force"] and mesh.neumann_facets.size:
        g = scales["surface_force"] * _density(prog, "surface_force", mesh)
        mean_u = u[mesh.neumann_facets].mean(axis=1)
        total += float(np.sum(mesh.neumann_weights * np.sum(mean_u * g, axis=1)))

    pairs = mesh.pairs
    if len(pairs):
        g_plus = scales["crack_plus"] * _density(prog, "crack_plus", mesh)
        g_minus = scales["crack_minus"] * _density(prog, "crack_minus", mesh)
        total += float(np.sum(pairs.weights * (np.sum(u[pairs.plus] * g_plus, axis=1)
                                               + np.sum(u[pairs.minus] * g_minus, axis=1))))
    return total


def load_apply(prog: LoadProgram, mesh: Mesh, t: float, u) -> float:
    """
    ⟨L(t), u⟩ by direct quadrature of the four load terms

    Raises:
        LoadError: If t is outside [0, T]
        MeshError: If u does not match the mesh
    """
    prog.check_time(t)
    return _quadrature(prog, mesh, mesh.as_field(u), _term_scales(prog, t, rate=False))


def load_rate_apply(prog: LoadProgram, mesh: Mesh, t: float, u) -> float:
    """⟨L̇(t), u⟩ using the analytic rates of the load profiles"""
    prog.check_time(t)
    return _quadrature(prog, mesh, mesh.as_field(u), _term_scales(prog, t, rate=True))
