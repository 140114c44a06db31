"""
Sparse SPD linear algebra on top of scipy.sparse.
Assembly, products, block extraction and direct factorization for subproblem solves.
"""

import logging
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
import scipy.io
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import DefinitenessError, DimensionError, StructuralError

logger = logging.getLogger(__name__)

# Type aliases
SparseMatrix = sp.csr_matrix
DenseVector = np.ndarray

# Relative pivot threshold (times the largest diagonal entry) for definiteness
PIVOT_TOLERANCE = 1e-14


def assemble(triplets: Iterable[Tuple[int, int, float]], nrows: int, ncols: int) -> SparseMatrix:
    """
    Assemble a CSR matrix from (row, col, value) triplets.

    Duplicate (row, col) entries are summed and column indices are sorted
    within each row.

    Args:
        triplets: Iterable of (row, col, value)
        nrows: Number of rows
        ncols: Number of columns

    Returns:
        Canonical CSR matrix

    Raises:
        StructuralError: If an index is out of range
    """
    data = list(triplets)
    if data:
        rows, cols, vals = (np.asarray(v) for v in zip(*data))
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0)
    return assemble_arrays(rows, cols, vals, nrows, ncols)


def assemble_arrays(rows: np.ndarray, cols: np.ndarray, vals: np.ndarray,
                    nrows: int, ncols: int) -> SparseMatrix:
    """Vectorized form of assemble() taking coordinate arrays."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=float)
    if not (rows.shape == cols.shape == vals.shape):
        raise StructuralError("row, column and value arrays differ in length")
    if rows.size and (rows.min() < 0 or rows.max() >= nrows
                      or cols.min() < 0 or cols.max() >= ncols):
        raise StructuralError(f"triplet index out of range for {nrows}x{ncols} matrix")

    A = sp.coo_matrix((vals, (rows, cols)), shape=(nrows, ncols)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def validate_structure(A: SparseMatrix) -> None:
    """
    Check CSR invariants: nondecreasing offsets, sorted unique columns per row.

    Raises:
        StructuralError: If any invariant is violated
    """
    offsets = A.indptr
    if offsets.size != A.shape[0] + 1 or np.any(np.diff(offsets) < 0):
        raise StructuralError("row offsets must be nondecreasing with length nrows+1")
    for row in range(A.shape[0]):
        cols = A.indices[offsets[row]:offsets[row + 1]]
        if cols.size > 1 and np.any(np.diff(cols) <= 0):
            raise StructuralError(f"columns of row {row} are not sorted and unique")


def is_symmetric(A: SparseMatrix, rtol: float = 1e-12) -> bool:
    """
    Check value(i,j) = value(j,i) for all stored entries.

    Args:
        A: Square sparse matrix
        rtol: Tolerance relative to the largest stored magnitude

    Returns:
        True if A is numerically symmetric
    """
    if A.shape[0] != A.shape[1]:
        return False
    if A.nnz == 0:
        return True
    scale = np.abs(A.data).max()
    diff = (A - A.T).tocsr()
    return diff.nnz == 0 or np.abs(diff.data).max() <= rtol * scale


def spmv(A: SparseMatrix, x: DenseVector) -> DenseVector:
    """Sparse matrix-vector product A x."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != A.shape[1]:
        raise DimensionError(f"cannot multiply {A.shape} matrix with vector of shape {x.shape}")
    return A @ x


def dot(x: DenseVector, y: DenseVector) -> float:
    """Euclidean inner product."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DimensionError(f"dot of vectors with shapes {x.shape} and {y.shape}")
    return float(np.dot(x, y))


def axpy(alpha: float, x: DenseVector, y: DenseVector) -> DenseVector:
    """Return y + alpha * x as a new vector."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DimensionError(f"axpy of vectors with shapes {x.shape} and {y.shape}")
    return y + alpha * x


class SpdFactor:
    """
    Sparse factorization of an SPD matrix permitting repeated solves.

    The factorization is a SuperLU decomposition run in symmetric mode with
    diagonal pivoting only, so the pivots are those of a symmetric
    elimination in the fill-reducing ordering chosen once per matrix.
    Instances are read-only after construction and may be shared between
    threads.
    """

    def __init__(self, A: SparseMatrix, ordering: str = 'MMD_AT_PLUS_A'):
        """
        Factor an SPD matrix.

        Args:
            A: Square SPD sparse matrix
            ordering: SuperLU column ordering (fill-reducing, symmetric)

        Raises:
            DimensionError: If A is not square
            DefinitenessError: If a nonpositive pivot is met
        """
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"cannot factor non-square matrix of shape {A.shape}")
        self.size = A.shape[0]
        self._lu = None
        if self.size == 0:
            return

        diag = A.diagonal()
        threshold = PIVOT_TOLERANCE * max(float(np.abs(diag).max()), np.finfo(float).tiny)
        if np.any(diag <= threshold):
            raise DefinitenessError("matrix has a nonpositive diagonal entry")

        try:
            self._lu = splu(
                sp.csc_matrix(A),
                permc_spec=ordering,
                diag_pivot_thresh=0.0,
                options={'SymmetricMode': True},
            )
        except RuntimeError as e:
            raise DefinitenessError(f"factorization failed: {e}") from e

        pivots = self._lu.U.diagonal()
        if np.any(pivots <= threshold):
            raise DefinitenessError(
                f"nonpositive pivot {pivots.min():.3e} (threshold {threshold:.3e})"
            )

    def solve(self, b: DenseVector) -> DenseVector:
        """Solve A x = b for one right-hand side."""
        b = np.asarray(b, dtype=float)
        if b.shape != (self.size,):
            raise DimensionError(f"right-hand side of shape {b.shape}, expected ({self.size},)")
        if self.size == 0:
            return np.zeros(0)
        return self._lu.solve(b)


def factor_spd(A: SparseMatrix) -> SpdFactor:
    """Factor an SPD matrix (see SpdFactor)."""
    return SpdFactor(A)


def solve(factor: SpdFactor, b: DenseVector) -> DenseVector:
    """Solve with a previously computed factorization."""
    return factor.solve(b)


def _check_index_set(indices: np.ndarray, bound: int, name: str) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64)
    if indices.ndim != 1:
        raise StructuralError(f"{name} index set must be one-dimensional")
    if indices.size:
        if indices.min() < 0 or indices.max() >= bound:
            raise StructuralError(f"{name} index out of range [0, {bound})")
        if np.any(np.diff(indices) <= 0):
            raise StructuralError(f"{name} index set must be sorted and unique")
    return indices


def extract_block(A: SparseMatrix, rows: Sequence[int], cols: Sequence[int]) -> SparseMatrix:
    """
    Extract the submatrix A(rows, cols).

    extract_block(A, J_i, J_i) is the local block A_i and
    extract_block(A, J_i', J_i) the coupling block A_ii'.

    Args:
        A: Sparse matrix
        rows: Sorted row index set
        cols: Sorted column index set

    Returns:
        CSR submatrix of shape (len(rows), len(cols))

    Raises:
        StructuralError: If an index set is unsorted or out of range
    """
    rows = _check_index_set(rows, A.shape[0], 'row')
    cols = _check_index_set(cols, A.shape[1], 'column')
    block = sp.csr_matrix(A[rows][:, cols])
    block.sort_indices()
    return block


def dump_matrix_market(A: SparseMatrix, path: str, comment: Optional[str] = None) -> None:
    """
    Write a matrix in MatrixMarket coordinate format for debugging.

    Args:
        A: Sparse matrix
        path: Output file path
        comment: Optional comment line
    """
    scipy.io.mmwrite(path, sp.coo_matrix(A), comment=comment or '', field='real',
                     symmetry='general')
    logger.debug("Wrote %dx%d matrix with %d entries to %s", A.shape[0], A.shape[1], A.nnz, path)
