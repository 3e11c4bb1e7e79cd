"""
P1 meshes with an embedded crack path

The crack path M is realized by duplicating the mesh nodes that lie on it:
elements on the positive side reference the ⊕ copy, elements on the
negative side the ⊖ copy. Interface integrals use nodal (lumped) weights.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

logger = logging.getLogger(__name__)

ROD_SIDES = ("left", "right")
RECT_SIDES = ("left", "right", "bottom", "top")


class MeshError(ValueError):
    """Raised when a mesh cannot be built or fails its structural checks"""
    pass


@dataclass(frozen=True)
class InterfaceFacet:
    """A facet of the crack path with its ⊕ and ⊖ node lists"""

    plus_nodes: Tuple[int, ...]
    minus_nodes: Tuple[int, ...]
    nodal_weights: Tuple[float, ...]
    normal: Tuple[float, ...]

    def __post_init__(self):
        if len(self.plus_nodes) != len(self.minus_nodes) or len(self.plus_nodes) != len(self.nodal_weights):
            raise MeshError("interface facet node lists and weights must have equal length")
        if any(w <= 0.0 for w in self.nodal_weights):
            raise MeshError("interface facet weights must be strictly positive")
        if abs(float(np.linalg.norm(self.normal)) - 1.0) > 1e-14:
            raise MeshError("interface facet normal must be a unit vector")

    def to_dict(self) -> Dict:
        return {
            "plus_nodes": list(self.plus_nodes),
            "minus_nodes": list(self.minus_nodes),
            "nodal_weights": list(self.nodal_weights),
            "normal": list(self.normal),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "InterfaceFacet":
        return cls(
            plus_nodes=tuple(int(i) for i in data["plus_nodes"]),
            minus_nodes=tuple(int(i) for i in data["minus_nodes"]),
            nodal_weights=tuple(float(w) for w in data["nodal_weights"]),
            normal=tuple(float(v) for v in data["normal"]),
        )


@dataclass(frozen=True)
class InterfacePairs:
    """Per-interface-node view of the crack path.

    Facets sharing a node pair are aggregated: weights are summed, so the
    weights partition the measure of M. Crack-tip nodes interior to the
    domain are not duplicated; they appear with plus == minus and are
    flagged as tied (their jump is structurally zero).
    """

    plus: np.ndarray
    minus: np.ndarray
    weights: np.ndarray
    normals: np.ndarray
    tied: np.ndarray

    def __len__(self) -> int:
        return int(self.plus.shape[0])

    @property
    def open_indices(self) -> np.ndarray:
        """Indices of pairs whose jump is a genuine unknown"""
        return np.flatnonzero(~self.tied)


@dataclass
class Mesh:
    """Simplicial P1 mesh of Ω with the crack path M embedded by node duplication"""

    dimension: int
    nodes: np.ndarray
    elements: np.ndarray
    dirichlet_nodes: np.ndarray
    neumann_facets: np.ndarray
    neumann_weights: np.ndarray
    interface_facets: List[InterfaceFacet] = field(default_factory=list)
    field_dimension: int = 1
    crack_measure: float = 0.0
    element_sides: Optional[np.ndarray] = None

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float).reshape(-1, self.dimension)
        self.elements = np.asarray(self.elements, dtype=int).reshape(-1, self.dimension + 1)
        self.dirichlet_nodes = np.unique(np.asarray(self.dirichlet_nodes, dtype=int))
        self.neumann_facets = np.asarray(self.neumann_facets, dtype=int).reshape(-1, self.dimension)
        self.neumann_weights = np.asarray(self.neumann_weights, dtype=float).reshape(-1)
        if self.element_sides is None:
            self.element_sides = np.zeros(self.elements.shape[0], dtype=int)
        self.element_sides = np.asarray(self.element_sides, dtype=int)

    @property
    def n_nodes(self) -> int:
        return int(self.nodes.shape[0])

    @property
    def n_elements(self) -> int:
        return int(self.elements.shape[0])

    @property
    def n_dofs(self) -> int:
        return self.n_nodes * self.field_dimension

    @cached_property
    def volumes(self) -> np.ndarray:
        """Element lengths (1D) or areas (2D)"""
        return self._geometry[0]

    @cached_property
    def shape_gradients(self) -> np.ndarray:
        """Constant gradients of the P1 basis functions, shape (E, d+1, d)"""
        return self._geometry[1]

    @cached_property
    def _geometry(self) -> Tuple[np.ndarray, np.ndarray]:
        coords = self.nodes[self.elements]
        jac = np.transpose(coords[:, 1:, :] - coords[:, :1, :], (0, 2, 1))
        det = np.linalg.det(jac)
        if np.any(np.abs(det) <= 0.0):
            raise MeshError("degenerate element found")
        factorial = 1.0 if self.dimension == 1 else 2.0
        volumes = np.abs(det) / factorial
        reference = np.vstack([-np.ones(self.dimension), np.eye(self.dimension)])
        grads = np.einsum("kj,eji->eki", reference, np.linalg.inv(jac))
        return volumes, grads

    @cached_property
    def pairs(self) -> InterfacePairs:
        weights: Dict[Tuple[int, int], float] = {}
        normals: Dict[Tuple[int, int], Tuple[float, ...]] = {}
        for facet in self.interface_facets:
            for plus, minus, w in zip(facet.plus_nodes, facet.minus_nodes, facet.nodal_weights):
                key = (plus, minus)
                weights[key] = weights.get(key, 0.0) + w
                normals.setdefault(key, facet.normal)
        keys = sorted(weights, key=lambda k: (k[1], k[0]))
        plus = np.array([k[0] for k in keys], dtype=int)
        minus = np.array([k[1] for k in keys], dtype=int)
        return InterfacePairs(
            plus=plus,
            minus=minus,
            weights=np.array([weights[k] for k in keys], dtype=float),
            normals=np.array([normals[k] for k in keys], dtype=float).reshape(-1, self.dimension),
            tied=plus == minus,
        )

    @cached_property
    def dirichlet_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[self.dirichlet_nodes] = True
        return mask

    def dof_partition(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Split the flattened degrees of freedom (node * m + component)

        Returns:
            Tuple of (free dofs, Dirichlet dofs)
        """
        m = self.field_dimension
        node_of_dof = np.repeat(np.arange(self.n_nodes), m)
        fixed = self.dirichlet_mask[node_of_dof]
        return np.flatnonzero(~fixed), np.flatnonzero(fixed)

    def as_field(self, u) -> np.ndarray:
        """Reshape a nodal field to (n_nodes, m), rejecting size mismatches"""
        u = np.asarray(u, dtype=float)
        if u.size != self.n_dofs:
            raise MeshError(
                f"field has {u.size} values, expected {self.n_dofs} "
                f"({self.n_nodes} nodes x {self.field_dimension} components)"
            )
        return u.reshape(self.n_nodes, self.field_dimension)

    def field_gradient(self, u) -> np.ndarray:
        """Element-wise gradient of a P1 field, shape (E, m, d)"""
        u = self.as_field(u)
        return np.einsum("ekm,ekd->emd", u[self.elements], self.shape_gradients)

    def assemble(self, local: np.ndarray) -> np.ndarray:
        """Sum element contributions of shape (E, d+1, m) into a nodal covector"""
        out = np.zeros((self.n_nodes, self.field_dimension))
        np.add.at(out, self.elements, local)
        return out

    def to_dict(self) -> Dict:
        pairs = self.pairs
        return {
            "dimension": self.dimension,
            "field_dimension": self.field_dimension,
            "nodes": self.nodes.tolist(),
            "elements": self.elements.tolist(),
            "element_sides": self.element_sides.tolist(),
            "dirichlet_nodes": self.dirichlet_nodes.tolist(),
            "neumann_facets": self.neumann_facets.tolist(),
            "neumann_weights": self.neumann_weights.tolist(),
            "crack_measure": self.crack_measure,
            "interface_facets": [f.to_dict() for f in self.interface_facets],
            "interface_pairs": {
                "plus": pairs.plus.tolist(),
                "minus": pairs.minus.tolist(),
                "weights": pairs.weights.tolist(),
            },
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "Mesh":
        return cls(
            dimension=int(data["dimension"]),
            nodes=np.array(data["nodes"], dtype=float),
            elements=np.array(data["elements"], dtype=int),
            dirichlet_nodes=np.array(data["dirichlet_nodes"], dtype=int),
            neumann_facets=np.array(data["neumann_facets"], dtype=int),
            neumann_weights=np.array(data["neumann_weights"], dtype=float),
            interface_facets=[InterfaceFacet.from_dict(f) for f in data["interface_facets"]],
            field_dimension=int(data.get("field_dimension", 1)),
            crack_measure=float(data.get("crack_measure", 0.0)),
            element_sides=np.array(data["element_sides"], dtype=int) if data.get("element_sides") else None,
        )


def validate_mesh(mesh: Mesh) -> Mesh:
    """
    Check the structural invariants of a mesh

    Args:
        mesh: Mesh to check

    Returns:
        The same mesh

    Raises:
        MeshError: If a twin pair is not coincident, the Dirichlet set is
            empty, a connected piece of Ω ∖ M is unclamped, or the interface
            weights do not partition the crack measure
    """
    if mesh.dirichlet_nodes.size == 0:
        raise MeshError("the Dirichlet node set is empty")

    pairs = mesh.pairs
    if len(pairs):
        gap = np.abs(mesh.nodes[pairs.plus] - mesh.nodes[pairs.minus]).max()
        if gap > 1e-12 * (1.0 + np.abs(mesh.nodes).max()):
            raise MeshError(f"interface twins are not coincident (max offset {gap:.3e})")
        total = float(pairs.weights.sum())
        if abs(total - mesh.crack_measure) > 1e-12 * max(mesh.crack_measure, 1.0):
            raise MeshError(
                f"interface weights sum to {total!r}, crack measure is {mesh.crack_measure!r}"
            )

    n = mesh.n_nodes
    k = mesh.dimension + 1
    rows = np.repeat(mesh.elements, k, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, k)).ravel()
    graph = coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n)).tocsr()
    n_components, labels = connected_components(graph, directed=False)
    clamped = np.unique(labels[mesh.dirichlet_nodes])
    if clamped.size != n_components:
        raise MeshError(
            f"{n_components - clamped.size} connected piece(s) of the cracked domain carry no Dirichlet node"
        )
    logger.debug(
        "mesh ok: %d nodes, %d elements, %d interface pairs, %d components",
        n, mesh.n_elements, len(pairs), n_components,
    )
    return mesh


def _grid_index(value: float, origin: float, spacing: float, label: str) -> int:
    position = (value - origin) / spacing
    index = int(round(position))
    if abs(position - index) > 1e-9:
        raise MeshError(f"{label} = {value!r} does not coincide with a grid node (spacing {spacing!r})")
    return index


def _check_sides(dirichlet_sides: Sequence[str], neumann_sides: Sequence[str], allowed: Sequence[str]):
    for side in list(dirichlet_sides) + list(neumann_sides):
        if side not in allowed:
            raise MeshError(f"unknown boundary side {side!r}; expected one of {', '.join(allowed)}")
    overlap = set(dirichlet_sides) & set(neumann_sides)
    if overlap:
        raise MeshError(f"sides {sorted(overlap)} are both Dirichlet and Neumann")


def build_rod_mesh(length: float,
                   n_elements: int,
                   interface_position: float,
                   dirichlet_sides: Sequence[str] = ROD_SIDES,
                   neumann_sides: Sequence[str] = (),
                   field_dimension: int = 1) -> Mesh:
    """
    Build a uniform 1D rod with one cohesive interface point

    Args:
        length: Rod length
        n_elements: Number of equal elements (>= 2)
        interface_position: Position of the interface, must be a grid node
        dirichlet_sides: Ends carrying the boundary deformation
        neumann_sides: Ends carrying the surface force
        field_dimension: Number of field components

    Returns:
        Mesh with nodes ordered left to right, the ⊖ copy before the ⊕ copy

    Raises:
        MeshError: If the interface is off-grid or not strictly interior
    """
    if length <= 0.0:
        raise MeshError("rod length must be positive")
    if n_elements < 2:
        raise MeshError("a rod needs at least 2 elements")
    if not 0.0 < interface_position < length:
        raise MeshError(f"interface position {interface_position!r} must lie strictly inside (0, {length!r})")
    _check_sides(dirichlet_sides, neumann_sides, ROD_SIDES)

    h = length / n_elements
    j = _grid_index(interface_position, 0.0, h, "interface position")

    x = np.linspace(0.0, length, n_elements + 1)
    nodes = np.insert(x, j + 1, x[j])
    elements = []
    for i in range(n_elements):
        a, b = (i, i + 1) if i < j else (i + 1, i + 2)
        elements.append((a, b))
    sides = np.where(np.arange(n_elements) < j, -1, 1)

    end_nodes = {"left": 0, "right": n_elements + 1}
    dirichlet = [end_nodes[s] for s in dirichlet_sides]
    neumann = [end_nodes[s] for s in neumann_sides]

    facet = InterfaceFacet(plus_nodes=(j + 1,), minus_nodes=(j,), nodal_weights=(1.0,), normal=(1.0,))
    mesh = Mesh(
        dimension=1,
        nodes=nodes,
        elements=np.array(elements),
        dirichlet_nodes=np.array(dirichlet, dtype=int),
        neumann_facets=np.array(neumann, dtype=int).reshape(-1, 1),
        neumann_weights=np.ones(len(neumann)),
        interface_facets=[facet],
        field_dimension=field_dimension,
        crack_measure=1.0,
        element_sides=sides,
    )
    return validate_mesh(mesh)


def build_rect_mesh_with_crack(width: float,
                               height: float,
                               nx: int,
                               ny: int,
                               crack_x_range: Tuple[float, float],
                               dirichlet_sides: Sequence[str] = ("bottom", "top"),
                               neumann_sides: Sequence[str] = ("left", "right"),
                               field_dimension: int = 1) -> Mesh:
    """
    Build a structured triangulation of ]−W/2, W/2[ × ]−H/2, H/2[ with a crack on y = 0

    Each grid cell is split into two triangles. Crack nodes get a ⊕ copy,
    appended after the grid nodes, and cells above the midline reference it.
    A tip lying inside the domain is tied, not duplicated: it stays a single
    node, its pair has plus == minus and ``tied`` set, and it never appears in
    ``pairs.open_indices``. With 4 × 4 cells on a 4 × 4 square and
    crack_x_range = (0, 1) both crack nodes are interior tips, so every pair
    is tied and no jump can open. The normal points from ⊖ (below) to ⊕
    (above).

    Args:
        width: Domain width W
        height: Domain height H
        nx: Cells along x
        ny: Cells along y (even, so that y = 0 is a grid line)
        crack_x_range: (x0, x1) end points of the crack, on grid nodes
        dirichlet_sides: Sides forming ∂₀Ω
        neumann_sides: Sides forming ∂₁Ω
        field_dimension: 1 for scalar/antiplane fields, 2 for planar elasticity

    Returns:
        Mesh

    Raises:
        MeshError: If ny is odd, the crack is off-grid, outside the domain,
            or cuts the domain in two
    """
    if width <= 0.0 or height <= 0.0:
        raise MeshError("domain width and height must be positive")
    if nx < 1 or ny < 2:
        raise MeshError("need nx >= 1 and ny >= 2")
    if ny % 2:
        raise MeshError(f"ny = {ny} is odd: the midline y = 0 is not a grid line")
    _check_sides(dirichlet_sides, neumann_sides, RECT_SIDES)

    hx, hy = width / nx, height / ny
    x0, x1 = float(crack_x_range[0]), float(crack_x_range[1])
    if not -width / 2 <= x0 < x1 <= width / 2:
        raise MeshError(f"crack range [{x0!r}, {x1!r}] must be increasing and inside the domain")
    i0 = _grid_index(x0, -width / 2, hx, "crack start")
    i1 = _grid_index(x1, -width / 2, hx, "crack end")
    if i0 == 0 and i1 == nx:
        raise MeshError("the crack crosses the whole domain; Ω ∖ M would be disconnected")

    xs = np.linspace(-width / 2, width / 2, nx + 1)
    ys = np.linspace(-height / 2, height / 2, ny + 1)
    gx, gy = np.meshgrid(xs, ys)
    base_nodes = np.column_stack([gx.ravel(), gy.ravel()])
    jm = ny // 2

    def grid(i, j):
        return j * (nx + 1) + i

    # crack tips inside the domain are kept single
    duplicated = [i for i in range(i0, i1 + 1) if not ((i == i0 and i0 > 0) or (i == i1 and i1 < nx))]
    plus_copy = {grid(i, jm): base_nodes.shape[0] + c for c, i in enumerate(duplicated)}
    nodes = np.vstack([base_nodes, base_nodes[[grid(i, jm) for i in duplicated]]]) if duplicated else base_nodes

    elements, sides = [], []
    for j in range(ny):
        for i in range(nx):
            n0, n1, n2, n3 = grid(i, j), grid(i + 1, j), grid(i + 1, j + 1), grid(i, j + 1)
            for tri in ((n0, n1, n2), (n0, n2, n3)):
                if j >= jm:
                    tri = tuple(plus_copy.get(n, n) for n in tri)
                elements.append(tri)
                sides.append(1 if j >= jm else -1)
    elements = np.array(elements, dtype=int)

    facets = []
    for i in range(i0, i1):
        minus = (grid(i, jm), grid(i + 1, jm))
        plus = tuple(plus_copy.get(n, n) for n in minus)
        facets.append(InterfaceFacet(plus_nodes=plus, minus_nodes=minus,
                                     nodal_weights=(hx / 2, hx / 2), normal=(0.0, 1.0)))

    scale = max(width, height)
    on_side = {
        "left": np.abs(nodes[:, 0] + width / 2) <= 1e-12 * scale,
        "right": np.abs(nodes[:, 0] - width / 2) <= 1e-12 * scale,
        "bottom": np.abs(nodes[:, 1] + height / 2) <= 1e-12 * scale,
        "top": np.abs(nodes[:, 1] - height / 2) <= 1e-12 * scale,
    }
    dirichlet = np.flatnonzero(np.any([on_side[s] for s in dirichlet_sides], axis=0)) \
        if dirichlet_sides else np.array([], dtype=int)

    edges = np.sort(np.vstack([elements[:, [0, 1]], elements[:, [1, 2]], elements[:, [2, 0]]]), axis=1)
    unique_edges, counts = np.unique(edges, axis=0, return_counts=True)
    boundary_edges = unique_edges[counts == 1]
    neumann, neumann_weights = [], []
    for a, b in boundary_edges:
        if any(on_side[s][a] and on_side[s][b] for s in neumann_sides):
            neumann.append((a, b))
            neumann_weights.append(float(np.linalg.norm(nodes[a] - nodes[b])))

    mesh = Mesh(
        dimension=2,
        nodes=nodes,
        elements=elements,
        dirichlet_nodes=dirichlet,
        neumann_facets=np.array(neumann, dtype=int).reshape(-1, 2),
        neumann_weights=np.array(neumann_weights),
        interface_facets=facets,
        field_dimension=field_dimension,
        crack_measure=(i1 - i0) * hx,
        element_sides=np.array(sides, dtype=int),
    )
    logger.info("built %dx%d crack mesh with %d duplicated crack nodes", nx, ny, len(duplicated))
    return validate_mesh(mesh)


def jump(mesh: Mesh, u) -> np.ndarray:
    """
    Jump [u] = u⊕ − u⊖ at every interface node pair

    Args:
        mesh: Mesh carrying the interface
        u: Nodal field with one value (or m-vector) per node, duplicates included

    Returns:
        Array of shape (n_pairs, m)

    Raises:
        MeshError: If the field length does not match the mesh
    """
    u = mesh.as_field(u)
    pairs = mesh.pairs
    return u[pairs.plus] - u[pairs.minus]
