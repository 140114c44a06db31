"""
Overlapping domain-decomposition splitting with a bilinear coarse space.
Builds subdomain index sets, local factorizations, the neighbor graph and
the stacked coupling operators used for distributed residual updates.
"""

import logging
from concurrent.futures import Executor
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, OverlapError, StructuralError
from .fem import FemProblem, GridSpec, assemble_poisson, coarse_operator, coarse_prolongation
from .sparse import SparseMatrix, SpdFactor, extract_block, factor_spd

logger = logging.getLogger(__name__)

WeightSpec = Union[float, Sequence[float]]


@dataclass
class Subdomain:
    """One overlapping subdomain: sorted fine index set J_i and the factored block A_i."""

    index: int
    dofs: np.ndarray
    cell: Tuple[int, int]
    bounds: Tuple[int, int, int, int]
    block: SparseMatrix
    factor: SpdFactor

    @property
    def size(self) -> int:
        return int(self.dofs.size)


def resolve_weights(spec: WeightSpec, n: int) -> np.ndarray:
    """
    Expand a weight specification to one positive weight per index 0..n.

    Args:
        spec: A single weight used for every index, or n+1 weights
        n: Number of subdomains

    Returns:
        Array of n+1 weights
    """
    weights = np.asarray(spec, dtype=float)
    if weights.ndim == 0:
        weights = np.full(n + 1, float(weights))
    if weights.shape != (n + 1,):
        raise DimensionError(f"expected {n + 1} weights, got {weights.shape[0]}")
    if np.any(~np.isfinite(weights)) or np.any(weights <= 0.0):
        raise StructuralError("all weights must be positive")
    return weights


def subdomain_dofs(grid: GridSpec, cx: int, cy: int, layers: int) -> Tuple[np.ndarray, Tuple[int, int, int, int]]:
    """
    Fine interior nodes strictly inside coarse cell (cx, cy) expanded by `layers` fine cells.

    Returns:
        Tuple of the sorted global index set and the clipped cell bounds
        (x_lo, x_hi, y_lo, y_hi) in fine grid units
    """
    k = grid.k
    x_lo = max(0, cx * k - layers)
    x_hi = min(grid.n1, (cx + 1) * k + layers)
    y_lo = max(0, cy * k - layers)
    y_hi = min(grid.n1, (cy + 1) * k + layers)

    m = grid.n1 - 1
    xs = np.arange(x_lo + 1, x_hi)
    ys = np.arange(y_lo + 1, y_hi)
    dofs = ((ys[:, None] - 1) * m + (xs[None, :] - 1)).ravel()
    return dofs.astype(np.int64), (x_lo, x_hi, y_lo, y_hi)


class Splitting:
    """
    Space splitting V = V_0 + V_1 + ... + V_n with weights omega_i.

    Besides the local factorizations the splitting keeps a stacked layout
    of all local vectors: block i (1-based) occupies offsets[i-1]:offsets[i]
    of a vector of length sum(M_i). In that layout the coupling matrix
    G = S A S^T holds the blocks A_ii' and G0 = S A R0 the coarse coupling,
    where S stacks the restrictions R_i^T. Instances are read-only after
    construction.
    """

    def __init__(self, problem: FemProblem, layers: int, weights: np.ndarray,
                 subdomains: List[Subdomain], R0: SparseMatrix, A0: SparseMatrix,
                 coarse_factor: SpdFactor):
        self.problem = problem
        self.grid = problem.grid
        self.layers = layers
        self.weights = weights
        self.subdomains = subdomains
        self.R0 = R0
        self.A0 = A0
        self.coarse_factor = coarse_factor

        sizes = np.array([s.size for s in subdomains], dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.stack_index = np.concatenate([s.dofs for s in subdomains])
        total = int(self.offsets[-1])
        N = problem.num_dofs

        # S maps global vectors to the stacked layout
        self.stacker = sp.csr_matrix(
            (np.ones(total), (np.arange(total), self.stack_index)), shape=(total, N))
        self.scatter = sp.csr_matrix(self.stacker.T)

        # First copy of every node in the stacked layout; the lowest index wins
        self.owner_pos = np.full(N, -1, dtype=np.int64)
        for s in reversed(subdomains):
            lo = self.offsets[s.index - 1]
            self.owner_pos[s.dofs] = np.arange(lo, lo + s.size)
        if np.any(self.owner_pos < 0):
            raise StructuralError("subdomains do not cover all fine interior nodes")

        A = problem.A
        self.coupling = sp.csr_matrix(self.stacker @ A @ self.scatter)
        self.coupling.sort_indices()
        self.coarse_coupling = sp.csr_matrix(self.stacker @ (A @ R0))

        # Block-level patterns: overlap (J_i and J_i' intersect) and coupling (A_ii' != 0)
        incidence = sp.csr_matrix(
            (np.ones(total), (np.repeat(np.arange(self.n), sizes), self.stack_index)),
            shape=(self.n, N))
        self._overlap = sp.csr_matrix(incidence @ incidence.T)
        pattern = abs(A)
        self._block_coupling = sp.csr_matrix(incidence @ pattern @ incidence.T)

        self.neighbors: Dict[int, List[int]] = {}
        ov = self._overlap
        for row in range(self.n):
            cols = ov.indices[ov.indptr[row]:ov.indptr[row + 1]]
            vals = ov.data[ov.indptr[row]:ov.indptr[row + 1]]
            self.neighbors[row + 1] = sorted(int(c) + 1 for c, v in zip(cols, vals) if c != row and v > 0)

    @property
    def n(self) -> int:
        """Number of subdomains (without the coarse space)."""
        return len(self.subdomains)

    @property
    def num_dofs(self) -> int:
        return self.problem.num_dofs

    @property
    def num_coarse_dofs(self) -> int:
        return self.R0.shape[1]

    @property
    def delta(self) -> float:
        """Relative overlap l / k."""
        return self.layers / self.grid.k

    @property
    def max_neighbors(self) -> int:
        """Maximal neighbor count l-bar."""
        return max((len(v) for v in self.neighbors.values()), default=0)

    @property
    def local_sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    def block(self, i: int) -> slice:
        """Slice of subdomain i (1 <= i <= n) in the stacked layout."""
        if not 1 <= i <= self.n:
            raise StructuralError(f"subdomain index {i} out of range 1..{self.n}")
        return slice(int(self.offsets[i - 1]), int(self.offsets[i]))

    def coupling_block(self, i: int, j: int) -> SparseMatrix:
        """Coupling block A_ij = A(J_i, J_j) read from the stacked coupling matrix."""
        return sp.csr_matrix(self.coupling[self.block(i), self.block(j)])

    def coupling_pairs(self) -> List[Tuple[int, int]]:
        """Pairs (i, i') with a nonzero coupling block, including i = i'."""
        coo = self._block_coupling.tocoo()
        return sorted((int(r) + 1, int(c) + 1) for r, c in zip(coo.row, coo.col))

    def coarse_columns(self, i: int) -> np.ndarray:
        """Coarse unknowns whose basis functions are supported on J_i."""
        rows = self.R0[self.subdomains[i - 1].dofs]
        return np.unique(rows.indices)

    def subdomain_center(self, i: int) -> Tuple[float, float]:
        """Center of coarse cell i in coarse-grid units."""
        cx, cy = self.subdomains[i - 1].cell
        return cx + 0.5, cy + 0.5

    def stack(self, v: np.ndarray) -> np.ndarray:
        """Restrict a global vector to all subdomains at once."""
        return np.asarray(v)[self.stack_index]

    def gather(self, v_stacked: np.ndarray) -> np.ndarray:
        """Rebuild a global vector from consistent stacked copies."""
        return np.asarray(v_stacked)[self.owner_pos]

    def _check_global(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.num_dofs,):
            raise DimensionError(f"expected vector of length {self.num_dofs}, got shape {v.shape}")
        return v

    def solve_local(self, i: int, r_local: np.ndarray) -> np.ndarray:
        """Local solve d_i = A_i^{-1} r_i (i >= 1) or d_0 = A_0^{-1} r_0."""
        if i == 0:
            return self.coarse_factor.solve(r_local)
        return self.subdomains[i - 1].factor.solve(r_local)

    def apply_T(self, i: int, r: np.ndarray) -> np.ndarray:
        """
        Local solution for subproblem i from a global residual.

        Args:
            i: Subproblem index 0..n, 0 is the coarse space
            r: Global residual of length N

        Returns:
            d_i = A_i^{-1} r(J_i), or d_0 = A_0^{-1} R0^T r
        """
        r = self._check_global(r)
        if i == 0:
            return self.coarse_factor.solve(self.R0.T @ r)
        if not 1 <= i <= self.n:
            raise StructuralError(f"subproblem index {i} out of range 0..{self.n}")
        return self.subdomains[i - 1].factor.solve(r[self.subdomains[i - 1].dofs])

    def prolongate(self, i: int, d: np.ndarray, out: np.ndarray, scale: float = 1.0) -> None:
        """Add scale * R_i d to the global vector `out`."""
        if i == 0:
            if d.size:
                out += scale * (self.R0 @ d)
        else:
            out[self.subdomains[i - 1].dofs] += scale * d

    def apply_P(self, x: np.ndarray, executor: Optional[Executor] = None,
                indices: Optional[Iterable[int]] = None) -> np.ndarray:
        """
        Apply the preconditioned operator P x = sum_i omega_i R_i T_i x.

        Args:
            x: Global vector
            executor: Optional executor running the local solves concurrently
            indices: Optional subset of 0..n (default all)

        Returns:
            Global vector P x, summed in ascending index order
        """
        x = self._check_global(x)
        r = self.problem.A @ x
        idx = list(range(self.n + 1)) if indices is None else sorted(indices)
        if executor is not None:
            solutions = list(executor.map(lambda i: self.apply_T(i, r), idx))
        else:
            solutions = [self.apply_T(i, r) for i in idx]

        y = np.zeros(self.num_dofs)
        for i, d in zip(idx, solutions):
            self.prolongate(i, d, y, self.weights[i])
        return y

    def summary(self) -> Dict[str, object]:
        """Structured description of the splitting."""
        sizes = self.local_sizes
        counts = [len(v) for v in self.neighbors.values()]
        return {
            'n1': self.grid.n1,
            'n0': self.grid.n0,
            'k': self.grid.k,
            'layers': self.layers,
            'delta': self.delta,
            'N': self.num_dofs,
            'n': self.n,
            'M0': self.num_coarse_dofs,
            'M_min': int(sizes.min()),
            'M_max': int(sizes.max()),
            'M_mean': float(sizes.mean()),
            'max_neighbors': self.max_neighbors,
            'mean_neighbors': float(np.mean(counts)) if counts else 0.0,
            'weights_uniform': bool(np.all(self.weights == self.weights[0])),
            'coupling_nnz': int(self.coupling.nnz),
        }

    def summary_text(self, extra: Optional[Dict[str, object]] = None) -> str:
        """Summary as 'key: value' lines."""
        items = dict(self.summary())
        if extra:
            items.update(extra)
        return '\n'.join(f"{key}: {value}" for key, value in items.items()) + '\n'


def build_splitting(grid: GridSpec, layers: int, weights: WeightSpec = 1.0,
                    problem: Optional[FemProblem] = None) -> Splitting:
    """
    Build the overlapping splitting on the coarse cells of `grid`.

    Args:
        grid: Fine/coarse grid; one subdomain per coarse cell
        layers: Number l of fine cell layers added around every coarse cell
        weights: Weight for all indices or one per index 0..n
        problem: Assembled problem, by default the Poisson problem with a = f = 1

    Returns:
        Splitting with factored local and coarse operators

    Raises:
        OverlapError: If l <= 0 or l >= k
    """
    if not 0 < layers < grid.k:
        raise OverlapError(f"overlap layers must satisfy 0 < l < k={grid.k}, got {layers}")
    if problem is None:
        problem = assemble_poisson(grid)
    if problem.grid != grid:
        raise DimensionError("problem was assembled on a different grid")

    n0 = grid.n0
    n = n0 * n0
    w = resolve_weights(weights, n)

    subdomains = []
    for cy in range(n0):
        for cx in range(n0):
            dofs, bounds = subdomain_dofs(grid, cx, cy, layers)
            block = extract_block(problem.A, dofs, dofs)
            subdomains.append(Subdomain(
                index=1 + cy * n0 + cx,
                dofs=dofs,
                cell=(cx, cy),
                bounds=bounds,
                block=block,
                factor=factor_spd(block),
            ))

    R0 = coarse_prolongation(grid)
    A0 = coarse_operator(problem.A, R0)
    coarse_factor = factor_spd(A0)

    splitting = Splitting(problem, layers, w, subdomains, R0, A0, coarse_factor)
    logger.info("Built splitting: n=%d, delta=%.4g, M in [%d, %d], M0=%d, l-bar=%d",
                splitting.n, splitting.delta, splitting.local_sizes.min(),
                splitting.local_sizes.max(), splitting.num_coarse_dofs, splitting.max_neighbors)
    return splitting
