"""
Exact elimination of the non-interface unknowns for quadratic bulk energies

With u⊕ = u⊖ + δ substituted on every open interface pair, the bulk part of
the incremental problem becomes a quadratic in (z, δ); eliminating z leaves
½δᵀSδ − rᵀδ + constant in the jump coordinates only.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.linalg import splu

from src.geometry.mesh import Mesh
from src.loads.program import LoadProgram, boundary_value, load_covector
from src.materials.bulk import BulkModel, stiffness_matrix
from src.materials.cohesive import CohesiveLaw, increment_cost, prox_increment

logger = logging.getLogger(__name__)


class SolverError(ValueError):
    """Raised for unsupported solver inputs or a diverging solve"""
    pass


@dataclass
class ReducedProblem:
    """½δᵀSδ − rᵀδ + constant over the jump coordinates (pair-major, m per pair)"""

    S: np.ndarray
    r: np.ndarray
    constant: float
    pair_index: np.ndarray
    field_dimension: int

    @property
    def n_pairs(self) -> int:
        return int(self.pair_index.size)

    def value(self, delta: np.ndarray) -> float:
        delta = np.asarray(delta, dtype=float).ravel()
        return float(0.5 * delta @ (self.S @ delta) - self.r @ delta + self.constant)


class SchurOperator:
    """Substitution T: (z, δ) ↦ free dofs and the factorized z-block of TᵀK_ffT"""

    def __init__(self, mesh: Mesh, stiffness: csr_matrix):
        self.mesh = mesh
        self.stiffness = stiffness
        m = mesh.field_dimension
        self.free, self.fixed = mesh.dof_partition()
        n_free = self.free.size
        position = -np.ones(mesh.n_dofs, dtype=int)
        position[self.free] = np.arange(n_free)

        pairs = mesh.pairs
        free_node = ~mesh.dirichlet_mask
        jump_pairs = [j for j in pairs.open_indices
                      if free_node[pairs.plus[j]] or free_node[pairs.minus[j]]]
        self.pair_index = np.array(jump_pairs, dtype=int)
        n_delta = self.pair_index.size * m

        eliminated = np.zeros(n_free, dtype=bool)
        # constant part of x: rows fed by a Dirichlet twin, (row, dof of the twin)
        self._lift_rows, self._lift_dofs = [], []
        delta_rows, delta_cols, delta_vals = [], [], []
        link_rows, link_from = [], []
        for k, j in enumerate(self.pair_index):
            plus, minus = pairs.plus[j], pairs.minus[j]
            for comp in range(m):
                col = k * m + comp
                p_dof, q_dof = plus * m + comp, minus * m + comp
                if free_node[plus]:
                    row = position[p_dof]
                    eliminated[row] = True
                    delta_rows.append(row)
                    delta_cols.append(col)
                    delta_vals.append(1.0)
                    if free_node[minus]:
                        link_rows.append(row)
                        link_from.append(position[q_dof])
                    else:
                        self._lift_rows.append(row)
                        self._lift_dofs.append(q_dof)
                else:
                    row = position[q_dof]
                    eliminated[row] = True
                    delta_rows.append(row)
                    delta_cols.append(col)
                    delta_vals.append(-1.0)
                    self._lift_rows.append(row)
                    self._lift_dofs.append(p_dof)

        kept = np.flatnonzero(~eliminated)
        z_column = -np.ones(n_free, dtype=int)
        z_column[kept] = np.arange(kept.size)
        rows = list(kept) + delta_rows + link_rows
        cols = list(z_column[kept]) + [kept.size + c for c in delta_cols] + [z_column[f] for f in link_from]
        vals = [1.0] * kept.size + delta_vals + [1.0] * len(link_rows)
        self.n_z = int(kept.size)
        self.n_delta = int(n_delta)
        self.transform = coo_matrix((vals, (rows, cols)), shape=(n_free, self.n_z + self.n_delta)).tocsr()

        k_ff = stiffness[self.free][:, self.free]
        self.k_ff = k_ff.tocsr()
        self.k_fd = stiffness[self.free][:, self.fixed].tocsr()
        self.k_dd = stiffness[self.fixed][:, self.fixed].tocsr()
        reduced = (self.transform.T @ self.k_ff @ self.transform).tocsc()
        a_zz = reduced[:self.n_z, :self.n_z].tocsc()
        a_zd = reduced[:self.n_z, self.n_z:].toarray()
        a_dd = reduced[self.n_z:, self.n_z:].toarray()
        self._lu = splu(a_zz) if self.n_z else None
        self._coupling = self._lu.solve(a_zd) if self.n_z and self.n_delta else np.zeros((self.n_z, self.n_delta))
        self.S = a_dd - a_zd.T @ self._coupling
        self.S = 0.5 * (self.S + self.S.T)
        logger.debug("schur operator: %d bulk unknowns, %d jump coordinates", self.n_z, self.n_delta)

    def _lift(self, u_fixed_full: np.ndarray) -> np.ndarray:
        x_c = np.zeros(self.free.size)
        if self._lift_rows:
            x_c[self._lift_rows] = u_fixed_full[self._lift_dofs]
        return x_c

    def _pieces(self, psi: np.ndarray, ell: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, float]:
        psi = psi.ravel()
        ell = ell.ravel()
        u_d = psi[self.fixed]
        x_c = self._lift(psi)
        linear = self.k_fd @ u_d - ell[self.free]
        base = float(0.5 * u_d @ (self.k_dd @ u_d) - ell[self.fixed] @ u_d)
        q_c = float(0.5 * x_c @ (self.k_ff @ x_c) + x_c @ linear) + base
        b = self.transform.T @ (self.k_ff @ x_c + linear)
        return x_c, b[:self.n_z], b[self.n_z:], q_c

    def reduce(self, psi: np.ndarray, ell: np.ndarray) -> ReducedProblem:
        """
        Reduced problem at one time

        Args:
            psi: Boundary deformation ψ(t), shape (N, m)
            ell: Load covector L(t), shape (N, m)

        Returns:
            ReducedProblem whose minimum equals the full bulk-minus-work minimum
            for every fixed jump δ
        """
        _, b_z, b_d, q_c = self._pieces(psi, ell)
        w_z = self._lu.solve(b_z) if self.n_z else np.zeros(0)
        r = -(b_d - self._coupling.T @ b_z)
        constant = q_c - 0.5 * float(b_z @ w_z)
        return ReducedProblem(S=self.S.copy(), r=r, constant=constant,
                              pair_index=self.pair_index, field_dimension=self.mesh.field_dimension)

    def recover(self, delta: np.ndarray, psi: np.ndarray, ell: np.ndarray) -> np.ndarray:
        """Full field (N, m) minimizing the bulk part for the given jumps"""
        delta = np.asarray(delta, dtype=float).ravel()
        x_c, b_z, _, _ = self._pieces(psi, ell)
        if self.n_z:
            z = -self._lu.solve(b_z) - self._coupling @ delta
        else:
            z = np.zeros(0)
        x = self.transform @ np.concatenate([z, delta]) + x_c
        u = np.asarray(psi, dtype=float).ravel().copy()
        u[self.free] = x
        return u.reshape(self.mesh.n_nodes, self.mesh.field_dimension)

    def jumps_of(self, u: np.ndarray) -> np.ndarray:
        """Jump coordinates δ of a full field"""
        u = self.mesh.as_field(u)
        pairs = self.mesh.pairs
        return (u[pairs.plus[self.pair_index]] - u[pairs.minus[self.pair_index]]).ravel()


def schur_reduce(mesh: Mesh, model: BulkModel, prog: LoadProgram, t: float) -> ReducedProblem:
    """
    Reduce the incremental problem at time t to the interface jumps

    Args:
        mesh: Mesh
        model: Bulk model, which must be quadratic
        prog: Load program supplying ψ(t) and L(t)
        t: Time

    Returns:
        ReducedProblem with S symmetric positive definite

    Raises:
        SolverError: If the bulk energy is not quadratic
        LoadError: If t is outside [0, T]
    """
    if not model.is_quadratic:
        raise SolverError(f"Schur reduction needs a quadratic bulk model, got {model.variant} p={model.p}")
    operator = SchurOperator(mesh, stiffness_matrix(model, mesh))
    return operator.reduce(boundary_value(prog, mesh, t), load_covector(prog, mesh, t))


def griffith_global_1d(S, law: CohesiveLaw, gamma: float, r: float, weight: float = 1.0) -> float:
    """
    Exact minimizer of ½Sδ² − rδ + w(φ(δ) − γ)⁺ for a single jump unknown

    The closed branch δ = 0 and the open branch are compared in closed form;
    a tie keeps the crack closed.

    Raises:
        SolverError: If S is not 1 × 1 or not positive
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape != (1, 1):
        raise SolverError(f"griffith_global_1d needs a single jump unknown, got S of shape {S.shape}")
    stiffness = float(S[0, 0])
    if stiffness <= 0.0:
        raise SolverError("reduced stiffness must be positive")
    r = float(np.asarray(r).ravel()[0])
    return float(prox_increment(law, r / stiffness, gamma, c=stiffness, w=weight))


def reduced_objective(problem: ReducedProblem, law: CohesiveLaw, gamma: np.ndarray,
                      weights: np.ndarray, delta: np.ndarray) -> float:
    """Reduced objective including the increment cost (without ‖γ‖₁)"""
    m = problem.field_dimension
    cost = increment_cost(law, np.asarray(delta).reshape(-1, m), gamma)
    return problem.value(delta) + float(np.dot(weights, cost))


def coordinate_descent(problem: ReducedProblem,
                       law: CohesiveLaw,
                       gamma: np.ndarray,
                       weights: np.ndarray,
                       delta0: np.ndarray,
                       max_sweeps: int,
                       objective_tolerance: float,
                       step_tolerance: float) -> Tuple[np.ndarray, int, bool]:
    """
    Block coordinate descent on the reduced problem

    Scalar jumps (m = 1) are updated by their exact one-dimensional prox.
    Vector jumps take a block prox step with c = λmax of the diagonal block.

    Returns:
        Tuple of (jumps, sweeps used, converged flag)
    """
    m = problem.field_dimension
    n = problem.n_pairs
    delta = np.asarray(delta0, dtype=float).ravel().copy()
    if n == 0:
        return delta, 0, True
    S, r = problem.S, problem.r
    if n == 1 and m == 1:
        delta[0] = griffith_global_1d(S, law, float(gamma[0]), float(r[0]), float(weights[0]))
        return delta, 1, True

    blocks = [slice(k * m, (k + 1) * m) for k in range(n)]
    block_stiffness = np.array([np.linalg.eigvalsh(S[b, b])[-1] for b in blocks])
    laws = [law.restrict(np.array([k])) for k in range(n)]
    residual = S @ delta - r
    value = reduced_objective(problem, law, gamma, weights, delta)
    for sweep in range(1, max_sweeps + 1):
        largest_step = 0.0
        for k, block in enumerate(blocks):
            old = delta[block].copy()
            if m == 1:
                diag = S[k, k]
                y0 = old - residual[block] / diag
                new = prox_increment(laws[k], y0.reshape(1, 1), gamma[k:k + 1], diag, weights[k:k + 1]).ravel()
            else:
                c = block_stiffness[k]
                y0 = old - residual[block] / c
                new = prox_increment(laws[k], y0.reshape(1, m), gamma[k:k + 1], c, weights[k:k + 1]).ravel()
            step = new - old
            if np.any(step):
                delta[block] = new
                residual += S[:, block] @ step
                largest_step = max(largest_step, float(np.abs(step).max()))
        new_value = reduced_objective(problem, law, gamma, weights, delta)
        if not np.isfinite(new_value):
            raise SolverError("reduced objective became non-finite")
        decrease = value - new_value
        value = new_value
        if decrease <= objective_tolerance and largest_step <= step_tolerance:
            return delta, sweep, True
    logger.warning("coordinate descent hit the sweep cap (%d)", max_sweeps)
    return delta, max_sweeps, False
