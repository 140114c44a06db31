"""
Extreme eigenvalue estimation for the preconditioned operator P.
Lanczos in the A-inner product with full reorthogonalization.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import eigh_tridiagonal

from ..utils.rng import derive_rng
from .errors import EstimationError
from .splitting import Splitting

logger = logging.getLogger(__name__)

MAX_RESTARTS = 3


@dataclass
class SpectralBounds:
    """Ritz estimates of the extreme eigenvalues of P plus optional user bounds."""

    lambda_min_est: float
    lambda_max_est: float
    lower_bound: Optional[float] = None
    upper_bound: Optional[float] = None
    iterations: int = 0
    restarts: int = 0

    def __post_init__(self):
        if not (0.0 < self.lambda_min_est <= self.lambda_max_est * (1.0 + 1e-12)):
            raise EstimationError(
                f"invalid estimates lambda_min={self.lambda_min_est}, lambda_max={self.lambda_max_est}")

    @property
    def kappa_est(self) -> float:
        return self.lambda_max_est / self.lambda_min_est

    @property
    def lambda_lower(self) -> float:
        """Lower bound used by the accelerated method (user bound if supplied)."""
        return self.lower_bound if self.lower_bound is not None else self.lambda_min_est

    @property
    def lambda_upper(self) -> float:
        return self.upper_bound if self.upper_bound is not None else self.lambda_max_est

    @property
    def kappa_bar(self) -> float:
        return self.lambda_upper / self.lambda_lower

    def with_user_bounds(self, lower: float, upper: float) -> 'SpectralBounds':
        """Copy with user-supplied bounds lower <= lambda_min, upper >= lambda_max."""
        if not 0.0 < lower <= upper:
            raise EstimationError(f"user bounds must satisfy 0 < lower <= upper, got {lower}, {upper}")
        return SpectralBounds(self.lambda_min_est, self.lambda_max_est, lower, upper,
                              self.iterations, self.restarts)

    def to_dict(self) -> dict:
        data = {
            'lambda_min': self.lambda_min_est,
            'lambda_max': self.lambda_max_est,
            'kappa': self.kappa_est,
            'iterations': self.iterations,
            'restarts': self.restarts,
        }
        if self.lower_bound is not None:
            data['lambda_lower'] = self.lower_bound
            data['lambda_upper'] = self.upper_bound
            data['kappa_bar'] = self.kappa_bar
        return data


class _Breakdown(Exception):
    pass


def _lanczos(splitting: Splitting, iterations: int, rng: np.random.Generator,
             tol: float) -> Tuple[np.ndarray, bool, int]:
    """
    One Lanczos run on P in the A-inner product.

    Returns:
        Tuple (Ritz values, invariant subspace reached early, steps taken)

    Raises:
        _Breakdown: On a zero start vector or non-finite coefficients
    """
    A = splitting.problem.A
    N = splitting.num_dofs
    steps = min(iterations, N)

    v = rng.standard_normal(N)
    Av = A @ v
    norm_sq = float(v @ Av)
    if not np.isfinite(norm_sq) or norm_sq <= 0.0:
        raise _Breakdown("start vector has zero A-norm")
    v /= math.sqrt(norm_sq)

    basis = np.zeros((steps, N))
    alphas = []
    betas = []
    previous = None

    for j in range(steps):
        basis[j] = v
        w = splitting.apply_P(v)
        Aw = A @ w
        alpha = float(v @ Aw)
        alphas.append(alpha)

        w = w - alpha * v
        if betas:
            w -= betas[-1] * basis[j - 1]
        # Full reorthogonalization against the basis, twice
        for _ in range(2):
            V = basis[:j + 1]
            w -= V.T @ (V @ (A @ w))
        Aw = A @ w
        beta_sq = float(w @ Aw)
        if not (np.isfinite(alpha) and np.isfinite(beta_sq)):
            raise _Breakdown(f"non-finite Lanczos coefficient at step {j}")

        ritz = eigh_tridiagonal(np.array(alphas), np.array(betas), eigvals_only=True) \
            if betas else np.array(alphas)

        beta = math.sqrt(max(beta_sq, 0.0))
        if beta <= 1e-10 * max(abs(alpha), 1.0):
            return ritz, j + 1 < N, j + 1

        if previous is not None and j >= 4:
            change = max(abs(ritz[0] - previous[0]) / abs(ritz[0]),
                         abs(ritz[-1] - previous[-1]) / abs(ritz[-1]))
            if change < tol:
                return ritz, False, j + 1
        previous = (ritz[0], ritz[-1])

        betas.append(beta)
        v = w / beta

    return ritz, False, steps


def estimate_spectral_bounds(splitting: Splitting, iterations: int = 60, seed: int = 0,
                             tol: float = 1e-6) -> SpectralBounds:
    """
    Estimate lambda_min and lambda_max of P = sum_i omega_i R_i T_i.

    P is self-adjoint in the A-inner product, so a Lanczos run with
    inner products x^T A y yields Ritz values inside its spectrum. A run
    that stops on an invariant subspace only sees part of the spectrum;
    it is restarted from a new random vector and the extremes of all runs
    are merged.

    Args:
        splitting: Built splitting
        iterations: Maximal Lanczos steps per run
        seed: Seed of the start vectors
        tol: Relative change of the extreme Ritz values to stop early

    Returns:
        SpectralBounds with the estimates

    Raises:
        EstimationError: If every run breaks down
    """
    lam_min = math.inf
    lam_max = -math.inf
    total_steps = 0
    restarts = 0
    last_error = None

    for attempt in range(MAX_RESTARTS + 1):
        rng = derive_rng(seed, 'lanczos', attempt)
        try:
            ritz, early_stop, steps = _lanczos(splitting, iterations, rng, tol)
        except _Breakdown as e:
            last_error = e
            logger.warning("Lanczos breakdown (attempt %d): %s", attempt + 1, e)
            restarts += 1
            continue

        total_steps += steps
        lam_min = min(lam_min, float(ritz[0]))
        lam_max = max(lam_max, float(ritz[-1]))
        if not early_stop:
            break
        logger.info("Lanczos reached an invariant subspace after %d steps; restarting", steps)
        restarts += 1

    if not np.isfinite(lam_min) or lam_min <= 0.0:
        raise EstimationError(f"spectral estimation failed after {MAX_RESTARTS} restarts: {last_error}")

    restarts = min(restarts, MAX_RESTARTS)
    bounds = SpectralBounds(lam_min, lam_max, iterations=total_steps, restarts=restarts)
    logger.info("Spectral estimate: lambda_min=%.6g, lambda_max=%.6g, kappa=%.6g (%d steps)",
                lam_min, lam_max, bounds.kappa_est, total_steps)
    return bounds
