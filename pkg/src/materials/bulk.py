"""
Bulk energy densities and their assembly on P1 meshes
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix

from src.geometry.mesh import Mesh

logger = logging.getLogger(__name__)

BULK_VARIANTS = ("quadratic_scalar", "p_power", "linear_elasticity")


class MaterialError(ValueError):
    """Raised for illegal material parameters or mismatched fields"""
    pass


@dataclass
class BulkModel:
    """Stored-energy density W of the uncracked material.

    quadratic_scalar: W(ξ) = ½|ξ|²
    p_power: W(ξ) = (1/p)|ξ|^p
    linear_elasticity: A ξ:ξ = 2μ|sym ξ|² + λ(tr ξ)²

    ``modulus`` scales W element-wise (a scalar or one value per element).
    """

    variant: str = "quadratic_scalar"
    p: float = 2.0
    lame_lambda: float = 0.0
    lame_mu: float = 0.0
    modulus: Union[float, np.ndarray] = 1.0

    def __post_init__(self):
        if self.variant not in BULK_VARIANTS:
            raise MaterialError(f"unknown bulk variant {self.variant!r}")
        if self.variant == "p_power":
            if self.p <= 1.0:
                raise MaterialError(f"p_power exponent must exceed 1, got {self.p!r}")
        else:
            self.p = 2.0
        if self.variant == "linear_elasticity" and self.lame_mu <= 0.0:
            raise MaterialError("linear_elasticity needs lame_mu > 0")
        modulus = np.asarray(self.modulus, dtype=float)
        if np.any(modulus <= 0.0):
            raise MaterialError("bulk modulus must be positive")

    @property
    def is_quadratic(self) -> bool:
        return self.p == 2.0

    def element_modulus(self, mesh: Mesh) -> np.ndarray:
        modulus = np.asarray(self.modulus, dtype=float)
        if modulus.ndim == 0:
            return np.full(mesh.n_elements, float(modulus))
        if modulus.shape != (mesh.n_elements,):
            raise MaterialError(f"modulus field has {modulus.size} values for {mesh.n_elements} elements")
        return modulus

    def check_mesh(self, mesh: Mesh):
        if self.variant == "linear_elasticity" and mesh.field_dimension != mesh.dimension:
            raise MaterialError(
                f"linear elasticity needs a {mesh.dimension}-component field, "
                f"mesh carries {mesh.field_dimension}"
            )


def _elasticity_tensor(model: BulkModel, d: int) -> np.ndarray:
    """Matrix D with ½ vec(ξ)ᵀ D vec(ξ) = 2μ|sym ξ|² + λ(tr ξ)², row-major vec"""
    identity = np.eye(d * d)
    swap = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            swap[i * d + j, j * d + i] = 1.0
    sym = 0.5 * (identity + swap)
    trace = np.eye(d).ravel()
    return 2.0 * (2.0 * model.lame_mu * sym + model.lame_lambda * np.outer(trace, trace))


def density(model: BulkModel, xi: np.ndarray) -> np.ndarray:
    """
    Energy density at a stack of gradients

    Args:
        model: Bulk model
        xi: Gradients of shape (..., m, d)

    Returns:
        Density per gradient, shape (...)
    """
    if model.variant == "quadratic_scalar":
        return 0.5 * np.sum(xi * xi, axis=(-2, -1))
    if model.variant == "p_power":
        norm = np.sqrt(np.sum(xi * xi, axis=(-2, -1)))
        return norm ** model.p / model.p
    eps = 0.5 * (xi + np.swapaxes(xi, -1, -2))
    tr = np.trace(eps, axis1=-2, axis2=-1)
    return 2.0 * model.lame_mu * np.sum(eps * eps, axis=(-2, -1)) + model.lame_lambda * tr ** 2


def density_gradient(model: BulkModel, xi: np.ndarray) -> np.ndarray:
    """∂ξW at a stack of gradients, same shape as ``xi``"""
    if model.variant == "quadratic_scalar":
        return xi.copy()
    if model.variant == "p_power":
        norm = np.sqrt(np.sum(xi * xi, axis=(-2, -1)))
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = np.where(norm > 0.0, norm ** (model.p - 2.0), 0.0)
        return factor[..., None, None] * xi
    d = xi.shape[-1]
    eps = 0.5 * (xi + np.swapaxes(xi, -1, -2))
    tr = np.trace(eps, axis1=-2, axis2=-1)
    return 2.0 * (2.0 * model.lame_mu * eps + model.lame_lambda * tr[..., None, None] * np.eye(d))


def growth_bounds(model: BulkModel, dimension: int) -> Tuple[float, float]:
    """
    Coercivity and growth witnesses (a₀, a₁) of the density

    For the scalar variants a₀|ξ|^p ≤ W(ξ) ≤ a₁|ξ|^p; for linear elasticity
    c₀|ξ|² ≤ Aξ:ξ ≤ c₁|ξ|² on symmetric ξ.
    """
    if model.variant in ("quadratic_scalar", "p_power"):
        return 1.0 / model.p, 1.0 / model.p
    shear = 2.0 * model.lame_mu
    bulk = 2.0 * model.lame_mu + dimension * model.lame_lambda
    return min(shear, bulk), max(shear, bulk)


def bulk_energy(model: BulkModel, mesh: Mesh, u) -> float:
    """
    Discrete bulk energy 𝒲(∇u) (or the elastic form 𝒬(Eu))

    Raises:
        MaterialError: If the field does not match the mesh
    """
    model.check_mesh(mesh)
    xi = mesh.field_gradient(u)
    return float(np.sum(mesh.volumes * model.element_modulus(mesh) * density(model, xi)))


def bulk_gradient(model: BulkModel, mesh: Mesh, u) -> np.ndarray:
    """
    Assembled differential v ↦ ⟨∂𝒲(∇u), ∇v⟩ as a nodal covector of shape (N, m)
    """
    model.check_mesh(mesh)
    xi = mesh.field_gradient(u)
    stress = density_gradient(model, xi) * (mesh.volumes * model.element_modulus(mesh))[:, None, None]
    local = np.einsum("emd,ekd->ekm", stress, mesh.shape_gradients)
    return mesh.assemble(local)


def bulk_pairing(model: BulkModel, mesh: Mesh, u, v) -> float:
    """⟨∂𝒲(∇u), ∇v⟩ evaluated element-wise (or ⟨∂𝒬(Eu), Ev⟩)"""
    model.check_mesh(mesh)
    stress = density_gradient(model, mesh.field_gradient(u))
    weights = mesh.volumes * model.element_modulus(mesh)
    return float(np.sum(weights * np.sum(stress * mesh.field_gradient(v), axis=(-2, -1))))


def stiffness_matrix(model: BulkModel, mesh: Mesh) -> csr_matrix:
    """
    Sparse Hessian K of the quadratic bulk energy, ½uᵀKu = 𝒲(∇u)

    Degrees of freedom are numbered node * m + component.

    Raises:
        MaterialError: If the bulk model is not quadratic
    """
    if not model.is_quadratic:
        raise MaterialError(f"stiffness matrix needs a quadratic bulk model, got p = {model.p!r}")
    model.check_mesh(mesh)
    m, d = mesh.field_dimension, mesh.dimension
    k = d + 1
    if model.variant == "quadratic_scalar":
        tensor = np.eye(m * d)
    else:
        tensor = _elasticity_tensor(model, d)

    grads = mesh.shape_gradients
    # B maps local dofs (node, component) to row-major vec(ξ) (component, direction)
    b_matrix = np.zeros((mesh.n_elements, m * d, k * m))
    for node in range(k):
        for comp in range(m):
            b_matrix[:, comp * d:(comp + 1) * d, node * m + comp] = grads[:, node, :]
    weights = mesh.volumes * model.element_modulus(mesh)
    local = np.einsum("eia,ij,ejb->eab", b_matrix, tensor, b_matrix) * weights[:, None, None]

    dofs = (mesh.elements[:, :, None] * m + np.arange(m)).reshape(mesh.n_elements, k * m)
    rows = np.repeat(dofs, k * m, axis=1).ravel()
    cols = np.tile(dofs, (1, k * m)).ravel()
    stiffness = coo_matrix((local.ravel(), (rows, cols)), shape=(mesh.n_dofs, mesh.n_dofs)).tocsr()
    logger.debug("assembled %s stiffness: %d dofs, %d nonzeros", model.variant, mesh.n_dofs, stiffness.nnz)
    return stiffness


def energy_norm(model: BulkModel, mesh: Mesh, u) -> float:
    """Discrete W^{1,p} seminorm (Σ vol |∇u|^p)^{1/p}"""
    xi = mesh.field_gradient(u)
    norms = np.sqrt(np.sum(xi * xi, axis=(-2, -1)))
    return float(np.sum(mesh.volumes * norms ** model.p) ** (1.0 / model.p))


def gradient_distance(mesh: Mesh, u, v) -> float:
    """Discrete W^{1,2} seminorm of u − v"""
    diff = mesh.field_gradient(u) - mesh.field_gradient(v)
    return float(np.sqrt(np.sum(mesh.volumes * np.sum(diff * diff, axis=(-2, -1)))))


def resolve_modulus(values: Optional[Union[float, list]]) -> Union[float, np.ndarray]:
    """Turn a configured modulus (scalar or per-element list) into model input"""
    if values is None:
        return 1.0
    if isinstance(values, (list, tuple)):
        return np.asarray(values, dtype=float)
    return float(values)
