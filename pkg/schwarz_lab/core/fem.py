"""
Bilinear (Q1) finite-element discretization of -div(a grad u) = f on the unit square.
Homogeneous Dirichlet conditions, uniform fine grid, coarse-space prolongation.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Tuple, Union

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, EllipticityError, StructuralError
from .sparse import SparseMatrix, assemble_arrays

logger = logging.getLogger(__name__)

Coefficient = Union[float, Callable[[np.ndarray, np.ndarray], np.ndarray]]

# 2x2 Gauss rule on the reference square [0,1]^2
_GAUSS_1D = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
_GAUSS_S, _GAUSS_T = (g.ravel() for g in np.meshgrid(_GAUSS_1D, _GAUSS_1D, indexing='xy'))
_GAUSS_W = np.full(4, 0.25)

# Local node order is counterclockwise: (0,0), (1,0), (1,1), (0,1)
_LOCAL_OFFSETS = np.array([[0, 0], [1, 0], [1, 1], [0, 1]])


def _shape_values(s: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.stack([(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t], axis=-1)


def _shape_gradients(s: np.ndarray, t: np.ndarray) -> np.ndarray:
    ds = np.stack([-(1 - t), (1 - t), t, -t], axis=-1)
    dt = np.stack([-(1 - s), -s, s, (1 - s)], axis=-1)
    return np.stack([ds, dt], axis=-1)


_PHI = _shape_values(_GAUSS_S, _GAUSS_T)                      # (q, i)
_GRAD = _shape_gradients(_GAUSS_S, _GAUSS_T)                  # (q, i, 2)
_GRAD_PRODUCTS = np.einsum('qid,qjd->qij', _GRAD, _GRAD)      # (q, i, j)


@dataclass(frozen=True)
class GridSpec:
    """Uniform fine grid (h = 1/n1) nested in a coarse grid (h0 = 1/n0)."""

    n1: int
    n0: int = 1

    def __post_init__(self):
        if self.n1 < 2:
            raise StructuralError(f"fine grid needs n1 >= 2, got {self.n1}")
        if self.n0 < 1:
            raise StructuralError(f"coarse grid needs n0 >= 1, got {self.n0}")
        if self.n1 % self.n0 != 0:
            raise StructuralError(f"n0={self.n0} does not divide n1={self.n1}")
        if self.n1 // self.n0 < 2:
            raise StructuralError(f"need k = n1/n0 >= 2, got {self.n1 // self.n0}")

    @property
    def k(self) -> int:
        return self.n1 // self.n0

    @property
    def h(self) -> float:
        return 1.0 / self.n1

    @property
    def h0(self) -> float:
        return 1.0 / self.n0

    @property
    def interior_per_side(self) -> int:
        return self.n1 - 1

    @property
    def num_dofs(self) -> int:
        """Number N of interior fine degrees of freedom."""
        return (self.n1 - 1) ** 2

    @property
    def num_coarse_dofs(self) -> int:
        """Number M0 of interior coarse degrees of freedom."""
        return (self.n0 - 1) ** 2

    def node_index(self, ix: int, iy: int) -> int:
        """Row-major interior index of fine grid node (ix, iy), 1 <= ix, iy <= n1-1."""
        m = self.n1 - 1
        if not (1 <= ix <= m and 1 <= iy <= m):
            raise StructuralError(f"node ({ix}, {iy}) is not an interior node")
        return (iy - 1) * m + (ix - 1)

    def interior_coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        """Coordinates (x, y) of the interior nodes in row-major order."""
        ticks = np.arange(1, self.n1) * self.h
        y, x = np.meshgrid(ticks, ticks, indexing='ij')
        return x.ravel(), y.ravel()


@dataclass
class FemProblem:
    """Assembled Dirichlet problem A x = b."""

    A: SparseMatrix
    b: np.ndarray
    grid: GridSpec
    coefficient: str = 'a = 1'
    rhs: str = 'f = 1'
    extra: dict = field(default_factory=dict)

    @property
    def num_dofs(self) -> int:
        return self.A.shape[0]


def _evaluate(func: Coefficient, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if callable(func):
        values = np.asarray(func(x, y), dtype=float)
    else:
        values = np.asarray(func, dtype=float)
    return np.broadcast_to(values, x.shape).astype(float)


def _describe(func: Coefficient, symbol: str) -> str:
    if callable(func):
        return f"{symbol} = {getattr(func, '__name__', 'callable')}(x, y)"
    return f"{symbol} = {float(func):g}"


def assemble_poisson(grid: GridSpec, a: Coefficient = 1.0, f: Coefficient = 1.0) -> FemProblem:
    """
    Assemble the Q1 stiffness matrix and load vector.

    Element integrals use the 2x2 Gauss rule with a and f sampled at the
    Gauss points, which is exact for constant data. Boundary rows and
    columns are eliminated.

    Args:
        grid: Fine/coarse grid description
        a: Diffusion coefficient, constant or vectorized callable a(x, y)
        f: Right-hand side, constant or vectorized callable f(x, y)

    Returns:
        FemProblem with the N x N stiffness matrix and load vector

    Raises:
        EllipticityError: If a is nonpositive at a Gauss point
    """
    n1 = grid.n1
    h = grid.h
    m = n1 - 1

    ey, ex = np.meshgrid(np.arange(n1), np.arange(n1), indexing='ij')
    ex = ex.ravel()
    ey = ey.ravel()

    # Gauss point coordinates per element: (elements, q)
    gx = (ex[:, None] + _GAUSS_S[None, :]) * h
    gy = (ey[:, None] + _GAUSS_T[None, :]) * h

    a_vals = _evaluate(a, gx, gy)
    if np.any(~np.isfinite(a_vals)) or np.any(a_vals <= 0.0):
        raise EllipticityError("diffusion coefficient must be positive at all Gauss points")
    f_vals = _evaluate(f, gx, gy)
    if np.any(~np.isfinite(f_vals)):
        raise StructuralError("right-hand side is not finite at all Gauss points")

    # Q1 stiffness is h-independent in 2D; the load scales with the element area
    k_elem = np.einsum('eq,qij->eij', a_vals * _GAUSS_W, _GRAD_PRODUCTS)
    b_elem = np.einsum('eq,qi->ei', f_vals * _GAUSS_W, _PHI) * h * h

    # Interior numbering of the four element nodes, -1 on the boundary
    nx = ex[:, None] + _LOCAL_OFFSETS[None, :, 0]
    ny = ey[:, None] + _LOCAL_OFFSETS[None, :, 1]
    interior = (nx >= 1) & (nx <= m) & (ny >= 1) & (ny <= m)
    dof = np.where(interior, (ny - 1) * m + (nx - 1), -1)

    rows = np.repeat(dof[:, :, None], 4, axis=2)
    cols = np.repeat(dof[:, None, :], 4, axis=1)
    keep = (rows >= 0) & (cols >= 0)
    A = assemble_arrays(rows[keep], cols[keep], k_elem[keep], grid.num_dofs, grid.num_dofs)

    b = np.zeros(grid.num_dofs)
    np.add.at(b, dof[interior], b_elem[interior])

    logger.debug("Assembled Q1 Poisson problem: N=%d, nnz=%d", grid.num_dofs, A.nnz)
    return FemProblem(A=A, b=b, grid=grid, coefficient=_describe(a, 'a'), rhs=_describe(f, 'f'))


def _hat_interpolation_1d(n1: int, n0: int) -> sp.csr_matrix:
    """Values of the interior coarse hat functions at the interior fine nodes (1D)."""
    k = n1 // n0
    fine = np.arange(1, n1)[:, None]
    coarse = (np.arange(1, n0) * k)[None, :]
    values = np.maximum(0.0, 1.0 - np.abs(fine - coarse) / k)
    return sp.csr_matrix(values)


def coarse_prolongation(grid: GridSpec) -> SparseMatrix:
    """
    Bilinear interpolation R0 from coarse interior nodes to fine interior nodes.

    Returns:
        N x M0 sparse matrix; M0 = (n0-1)^2 may be zero

    Raises:
        StructuralError: If n0 does not divide n1 or k < 2
    """
    if grid.n1 % grid.n0 != 0 or grid.k < 2:
        raise StructuralError(f"invalid grid nesting n1={grid.n1}, n0={grid.n0}")
    p1 = _hat_interpolation_1d(grid.n1, grid.n0)
    # Row-major numbering on both levels makes R0 a Kronecker product
    R0 = sp.kron(p1, p1, format='csr')
    R0.eliminate_zeros()
    R0.sort_indices()
    return R0


def coarse_operator(A: SparseMatrix, R0: SparseMatrix) -> SparseMatrix:
    """
    Galerkin coarse operator A0 = R0^T A R0.

    Raises:
        DimensionError: If the shapes are incompatible
    """
    if A.shape[0] != A.shape[1] or R0.shape[0] != A.shape[1]:
        raise DimensionError(f"cannot form R0^T A R0 with A {A.shape} and R0 {R0.shape}")
    A0 = sp.csr_matrix(R0.T @ (A @ R0))
    # Symmetrize round-off so the factorization sees an exactly symmetric matrix
    A0 = sp.csr_matrix(0.5 * (A0 + A0.T))
    A0.sort_indices()
    return A0
