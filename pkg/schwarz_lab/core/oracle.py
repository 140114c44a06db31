"""
Dense brute-force references for small instances.
Nothing here shares factorization code with the sparse solver path.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg

from .errors import ConsistencyError, DimensionError, OracleCapError
from .splitting import Splitting

logger = logging.getLogger(__name__)

DenseOperator = np.ndarray

MAX_DENSE_SIZE = 2000
MAX_SUBSETS = 100_000


def _check_size(N: int) -> None:
    if N > MAX_DENSE_SIZE:
        raise OracleCapError(f"dense oracle limited to N <= {MAX_DENSE_SIZE}, got {N}")


def dense_solve(A: DenseOperator, b: np.ndarray) -> np.ndarray:
    """
    Solve A x = b by Gaussian elimination with partial pivoting.

    Raises:
        OracleCapError: If A is larger than the oracle cap
        ConsistencyError: If A is singular to working precision
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or b.shape[0] != A.shape[0]:
        raise DimensionError(f"cannot solve with A {A.shape} and b {b.shape}")
    _check_size(A.shape[0])
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise ConsistencyError("dense solve with non-finite data")
    try:
        x = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as e:
        raise ConsistencyError(f"matrix is singular to working precision: {e}") from e
    if np.linalg.cond(A) > 1.0 / np.finfo(float).eps:
        raise ConsistencyError("matrix is singular to working precision")
    return x


@dataclass
class DenseSplitting:
    """Dense A, B = sum omega_i R_i A_i^{-1} R_i^T, P = B A and the spectrum of P."""

    A: DenseOperator
    B: DenseOperator
    P: DenseOperator
    weights: np.ndarray
    corrections: list
    eigenvalues: np.ndarray

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def kappa(self) -> float:
        return self.lambda_max / self.lambda_min

    @property
    def n(self) -> int:
        return len(self.corrections) - 1

    def local_correction(self, i: int, e: np.ndarray) -> np.ndarray:
        """R_i A_i^{-1} R_i^T A e, unweighted."""
        return self.corrections[i] @ e


def assemble_P_dense(splitting: Splitting) -> DenseSplitting:
    """
    Assemble P = sum_i omega_i R_i A_i^{-1} R_i^T A with dense arithmetic.

    The spectrum of P in the A-inner product comes from the symmetric
    generalized eigenproblem (A B A) x = mu A x.

    Raises:
        OracleCapError: If N exceeds the dense cap
    """
    N = splitting.num_dofs
    _check_size(N)
    A = splitting.problem.A.toarray()

    injections = []
    R0 = splitting.R0.toarray()
    injections.append(R0)
    for sub in splitting.subdomains:
        R = np.zeros((N, sub.dofs.size))
        R[sub.dofs, np.arange(sub.dofs.size)] = 1.0
        injections.append(R)

    B = np.zeros((N, N))
    corrections = []
    for i, R in enumerate(injections):
        if R.shape[1] == 0:
            corrections.append(np.zeros((N, N)))
            continue
        local = R.T @ A @ R
        inverse = np.linalg.inv(local)
        term = R @ inverse @ R.T
        B += splitting.weights[i] * term
        corrections.append(term @ A)

    B = 0.5 * (B + B.T)
    P = B @ A
    M = A @ B @ A
    eigenvalues = scipy.linalg.eigh(0.5 * (M + M.T), A, eigvals_only=True)
    if eigenvalues[0] <= 0.0:
        raise ConsistencyError(f"P is not positive definite (lambda_min={eigenvalues[0]:.3e})")
    logger.debug("Dense oracle: N=%d, lambda in [%.6g, %.6g]", N, eigenvalues[0], eigenvalues[-1])
    return DenseSplitting(A=A, B=B, P=P, weights=splitting.weights.copy(),
                          corrections=corrections, eigenvalues=np.sort(eigenvalues))


def energy_norm_sq(A: DenseOperator, v: np.ndarray) -> float:
    """a(v, v) = v^T A v."""
    return float(v @ (A @ v))


def omega_norm(data: DenseSplitting, v: np.ndarray) -> float:
    """|||v|||^2_omega = a(P^{-1} v, v) computed with a dense solve."""
    v = np.asarray(v, dtype=float)
    if v.shape != (data.A.shape[0],):
        raise DimensionError(f"vector of shape {v.shape} does not match N={data.A.shape[0]}")
    y = np.linalg.solve(data.P, v)
    return float(y @ (data.A @ v))


def exhaustive_expectation(data: DenseSplitting, error: np.ndarray, p: int, xi: float) -> float:
    """
    Exact E||e - xi sum_{i in I} omega_i R_i T_i e||_A^2 over all size-p subsets I.

    Args:
        data: Dense splitting data
        error: Current error e = u - x
        p: Subset size
        xi: Relaxation

    Raises:
        OracleCapError: If there are more than MAX_SUBSETS subsets
    """
    total = data.n + 1
    if not 1 <= p <= total:
        raise DimensionError(f"p must lie in 1..{total}, got {p}")
    count = math.comb(total, p)
    if count > MAX_SUBSETS:
        raise OracleCapError(f"{count} subsets exceed the cap of {MAX_SUBSETS}")

    terms = np.array([data.weights[i] * data.local_correction(i, error) for i in range(total)])
    acc = 0.0
    for subset in itertools.combinations(range(total), p):
        e_new = error - xi * terms[list(subset)].sum(axis=0)
        acc += energy_norm_sq(data.A, e_new)
    return acc / count


def monte_carlo_expectation(data: DenseSplitting, error: np.ndarray, p: int, xi: float,
                            draws: int, rng: np.random.Generator) -> Tuple[float, float]:
    """
    Sample mean and standard error of ||e_new||_A^2 over uniform size-p subsets.
    """
    total = data.n + 1
    terms = np.array([data.weights[i] * data.local_correction(i, error) for i in range(total)])
    values = np.empty(draws)
    for k in range(draws):
        subset = rng.choice(total, size=p, replace=False)
        values[k] = energy_norm_sq(data.A, error - xi * terms[subset].sum(axis=0))
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(draws)) if draws > 1 else 0.0


def exact_solution(splitting: Splitting, b: Optional[np.ndarray] = None) -> np.ndarray:
    """Dense solution of A u = b for a small problem."""
    A = splitting.problem.A.toarray()
    return dense_solve(A, splitting.problem.b if b is None else b)
