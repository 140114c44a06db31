"""
Stochastic subspace correction iterations.
One-step iteration with fixed or steepest-descent relaxation, the accelerated
two-step iteration, the distributed error indicator and the run loop.
"""

import logging
import math
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..utils.csvio import write_csv
from .errors import ConfigError, ConsistencyError, DimensionError, EstimationError
from .sampling import IndexSource
from .splitting import Splitting

logger = logging.getLogger(__name__)

Relaxation = Union[str, float]

STEEPEST_DESCENT = 'steepest-descent'
METHODS = ('one-step', 'accelerated')
P_POLICIES = ('exact', 'lower-bound')

# Negative local indicators beyond this (relative) size are inconsistent
NEGATIVE_TOLERANCE = 1e-12

CSV_COLUMNS = ('m', 'p_m', 'f_m', 'xi_m', 'epsilon')


@dataclass
class StepRecord:
    """One row of a run report."""

    m: int
    p_m: int
    f_m: int
    xi_m: float
    epsilon: float
    eta_m: Optional[float] = None
    alpha_m: Optional[float] = None
    beta_m: Optional[float] = None
    flags: Tuple[str, ...] = ()

    def csv_row(self) -> tuple:
        return (self.m, self.p_m, self.f_m, float(self.xi_m), float(self.epsilon))


@dataclass
class IterationState:
    """
    Iterate x with its residual kept in the stacked subdomain layout.

    r_local holds r restricted to every J_i (overlapping copies) and is
    updated with the coupling blocks; e_values holds e_i = r_i^T d_i from
    the last solve of subproblem i.
    """

    m: int
    x: np.ndarray
    r_local: np.ndarray
    e_values: np.ndarray
    epsilon: float = math.nan
    steps_since_refresh: int = 0
    last_step: Optional[StepRecord] = None

    def residual(self, splitting: Splitting) -> np.ndarray:
        """Global residual assembled from the stacked copies."""
        return splitting.gather(self.r_local)


@dataclass
class AccelState:
    """State (u, v) of the accelerated iteration with residuals for both iterates."""

    m: int
    x_u: np.ndarray
    x_v: np.ndarray
    r_u_local: np.ndarray
    r_v_local: np.ndarray
    e_values: np.ndarray
    lambda_upper: float
    lambda_lower: float
    epsilon: float = math.nan
    steps_since_refresh: int = 0
    last_step: Optional[StepRecord] = None

    @property
    def kappa_bar(self) -> float:
        return self.lambda_upper / self.lambda_lower

    @property
    def xi(self) -> float:
        return 1.0 / self.lambda_upper

    @property
    def eta(self) -> float:
        return 1.0 / math.sqrt(self.lambda_upper * self.lambda_lower)


@dataclass
class AccelParams:
    alpha: float
    beta: float
    xi: float
    eta: float


@dataclass
class Correction:
    """
    Local solutions of one cycle and their combined effect.

    stacked and coarse hold the weighted local solutions omega_i d_i,
    vector the global correction c and ac_stacked the stacked A c.
    """

    indices: np.ndarray
    solutions: Dict[int, np.ndarray]
    indicators: Dict[int, float]
    stacked: np.ndarray
    coarse: np.ndarray
    vector: np.ndarray
    ac_stacked: np.ndarray

    @property
    def is_empty(self) -> bool:
        return self.indices.size == 0

    def ac(self, splitting: Splitting) -> np.ndarray:
        return splitting.gather(self.ac_stacked)


def _check_indices(indices: Sequence[int], n: int) -> np.ndarray:
    indices = np.sort(np.asarray(indices, dtype=np.int64).ravel())
    if indices.size and (indices[0] < 0 or indices[-1] > n):
        raise DimensionError(f"index set must lie in 0..{n}")
    return indices


def compute_correction(splitting: Splitting, r_local: np.ndarray, indices: Sequence[int],
                       executor: Optional[Executor] = None) -> Correction:
    """
    Solve the subproblems in I_m against a frozen residual and combine them.

    Repeated indices (sampling with replacement) contribute once per draw.

    Args:
        splitting: Built splitting
        r_local: Stacked residual
        indices: Index set I_m
        executor: Optional executor for concurrent local solves

    Returns:
        Correction with c = sum omega_i R_i d_i and its stacked image A c
    """
    indices = _check_indices(indices, splitting.n)
    unique, counts = np.unique(indices, return_counts=True)
    r_coarse = None
    if unique.size and unique[0] == 0:
        r_coarse = splitting.R0.T @ splitting.gather(r_local)

    def solve(i: int) -> Tuple[np.ndarray, float]:
        rhs = r_coarse if i == 0 else r_local[splitting.block(i)]
        d = splitting.solve_local(i, rhs)
        return d, float(rhs @ d)

    idx = [int(i) for i in unique]
    if executor is not None and len(idx) > 1:
        results = list(executor.map(solve, idx))
    else:
        results = [solve(i) for i in idx]

    stacked = np.zeros(r_local.shape[0])
    coarse = np.zeros(splitting.num_coarse_dofs)
    solutions = {}
    indicators = {}
    for i, count, (d, e) in zip(idx, counts, results):
        solutions[i] = d
        indicators[i] = e
        weight = splitting.weights[i] * count
        if i == 0:
            coarse += weight * d
        else:
            stacked[splitting.block(i)] += weight * d

    vector = splitting.scatter @ stacked
    ac_stacked = splitting.coupling @ stacked
    if coarse.size:
        vector = vector + splitting.R0 @ coarse
        ac_stacked = ac_stacked + splitting.coarse_coupling @ coarse

    return Correction(indices=indices, solutions=solutions, indicators=indicators,
                      stacked=stacked, coarse=coarse, vector=vector, ac_stacked=ac_stacked)


def local_indicators(splitting: Splitting, r_local: np.ndarray,
                     executor: Optional[Executor] = None) -> np.ndarray:
    """Indicators e_i = r_i^T A_i^{-1} r_i for every i = 0..n."""
    correction = compute_correction(splitting, r_local, np.arange(splitting.n + 1), executor)
    e = np.zeros(splitting.n + 1)
    for i, value in correction.indicators.items():
        e[i] = value
    return e


def error_indicator(e_values: np.ndarray) -> float:
    """
    Global error indicator epsilon = (sum_i e_i)^(1/2).

    The caller passes the coarse value e_0 of the current cycle together
    with the local values e_i of earlier cycles.

    Raises:
        ConsistencyError: If some e_i is negative beyond round-off
    """
    e_values = np.asarray(e_values, dtype=float)
    if not np.all(np.isfinite(e_values)):
        raise ConsistencyError("non-finite local error indicator")
    total = float(e_values.sum())
    if e_values.size and e_values.min() < -NEGATIVE_TOLERANCE * max(1.0, abs(total)):
        raise ConsistencyError(f"negative local error indicator {e_values.min():.3e}")
    return math.sqrt(max(total, 0.0))


def _mixed_indicator(e_values: np.ndarray, correction: Correction) -> Tuple[float, np.ndarray]:
    """Indicator of a cycle and the stored values updated with this cycle's solves."""
    current = e_values.copy()
    if 0 in correction.indicators:
        current[0] = correction.indicators[0]
    epsilon = error_indicator(current)
    for i, value in correction.indicators.items():
        current[i] = value
    return epsilon, current


def initial_state(splitting: Splitting, x0: Optional[np.ndarray] = None,
                  executor: Optional[Executor] = None) -> IterationState:
    """
    Start state with all local indicators computed from the initial residual.

    Its epsilon is the indicator of the initial iterate, so cycles with an
    empty index set before the first solve still report a finite value.

    Args:
        splitting: Built splitting
        x0: Initial iterate, zero by default
        executor: Optional executor for the priming solves
    """
    problem = splitting.problem
    x = np.zeros(problem.num_dofs) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (problem.num_dofs,):
        raise DimensionError(f"initial iterate has shape {x.shape}")
    r_local = splitting.stack(problem.b - problem.A @ x)
    e_values = local_indicators(splitting, r_local, executor)
    return IterationState(m=0, x=x, r_local=r_local, e_values=e_values,
                          epsilon=error_indicator(e_values))


def residual_drift(splitting: Splitting, x: np.ndarray, r_local: np.ndarray) -> float:
    """Relative difference between the stacked residual and b - A x."""
    problem = splitting.problem
    exact = splitting.stack(problem.b - problem.A @ x)
    scale = max(float(np.linalg.norm(exact)), np.finfo(float).tiny)
    return float(np.linalg.norm(r_local - exact)) / scale


def steepest_descent_xi(state: IterationState, splitting: Splitting,
                        correction: Correction) -> Tuple[float, bool]:
    """
    Relaxation minimizing the energy error along the correction.

    Uses a(e, c) = r^T c and a(c, c) = c^T A c, so the error is never needed.

    Returns:
        Tuple (xi_m, flag); the flag is set and xi_m = 0 when a(c, c) = 0
    """
    c = correction.vector
    denominator = float(c @ correction.ac(splitting))
    if correction.is_empty or not denominator > 0.0:
        return 0.0, True
    numerator = float(state.residual(splitting) @ c)
    return numerator / denominator, False


def _resolve_xi(relaxation: Relaxation, state: IterationState, splitting: Splitting,
                correction: Correction) -> Tuple[float, bool]:
    if relaxation == STEEPEST_DESCENT:
        return steepest_descent_xi(state, splitting, correction)
    try:
        return float(relaxation), False
    except (TypeError, ValueError):
        raise ConfigError(f"unknown relaxation '{relaxation}'")


def _advance(state: IterationState, splitting: Splitting, correction: Correction,
             xi: float, refresh_interval: int) -> Tuple[np.ndarray, np.ndarray, int, bool]:
    x = state.x + xi * correction.vector
    r_local = state.r_local - xi * correction.ac_stacked
    steps = state.steps_since_refresh + 1
    refreshed = False
    if refresh_interval and steps >= refresh_interval:
        problem = splitting.problem
        r_local = splitting.stack(problem.b - problem.A @ x)
        steps = 0
        refreshed = True
    return x, r_local, steps, refreshed


def one_step(state: IterationState, splitting: Splitting, indices: Sequence[int],
             relaxation: Relaxation = STEEPEST_DESCENT, executor: Optional[Executor] = None,
             refresh_interval: int = 50) -> IterationState:
    """
    One cycle of the stochastic subspace correction iteration.

    Args:
        state: Current state, residual consistent with the iterate
        splitting: Built splitting
        indices: Index set I_m
        relaxation: Fixed xi (xi_{m,i} = xi omega_i) or 'steepest-descent'
        executor: Optional executor for the local solves
        refresh_interval: Recompute the residual globally every this many steps

    Returns:
        New state; its last_step describes the cycle
    """
    indices = _check_indices(indices, splitting.n)
    p_m = int(np.unique(indices).size)
    f_m = splitting.n + 1 - p_m
    if indices.size == 0:
        record = StepRecord(state.m, 0, f_m, 0.0, state.epsilon, flags=('empty',))
        return replace(state, m=state.m + 1, last_step=record)

    correction = compute_correction(splitting, state.r_local, indices, executor)
    epsilon, e_values = _mixed_indicator(state.e_values, correction)
    xi, degenerate = _resolve_xi(relaxation, state, splitting, correction)
    x, r_local, steps, refreshed = _advance(state, splitting, correction, xi, refresh_interval)

    flags = []
    if degenerate:
        flags.append('zero-correction')
    if 0 not in correction.indicators:
        flags.append('coarse-lagged')
    if refreshed:
        flags.append('refresh')
    record = StepRecord(state.m, p_m, f_m, xi, epsilon, flags=tuple(flags))
    return IterationState(m=state.m + 1, x=x, r_local=r_local, e_values=e_values,
                          epsilon=epsilon, steps_since_refresh=steps, last_step=record)


def accel_params(p_m: int, n: int, lambda_upper: float, lambda_lower: float) -> AccelParams:
    """
    Parameters of the accelerated iteration for a cycle with p_m solves.

    Returns:
        AccelParams with alpha_m = p/(p + (n+1) sqrt(kappa)),
        beta_m = 1 - p/((n+1) sqrt(kappa)), xi = 1/lambda_upper and
        eta = (lambda_upper lambda_lower)^(-1/2)
    """
    if not 0.0 < lambda_lower <= lambda_upper:
        raise EstimationError(
            f"bounds must satisfy 0 < lower <= upper, got lower={lambda_lower}, upper={lambda_upper}")
    if not 1 <= p_m <= n + 1:
        raise DimensionError(f"p_m must lie in 1..{n + 1}, got {p_m}")
    root_kappa = math.sqrt(lambda_upper / lambda_lower)
    scaled = (n + 1) * root_kappa
    return AccelParams(
        alpha=p_m / (p_m + scaled),
        beta=1.0 - p_m / scaled,
        xi=1.0 / lambda_upper,
        eta=1.0 / math.sqrt(lambda_upper * lambda_lower),
    )


def initial_accel_state(splitting: Splitting, lambda_upper: float, lambda_lower: float,
                        x0: Optional[np.ndarray] = None,
                        executor: Optional[Executor] = None) -> AccelState:
    """Start state u = v = x0 with primed local indicators."""
    base = initial_state(splitting, x0, executor)
    return AccelState(m=0, x_u=base.x, x_v=base.x.copy(), r_u_local=base.r_local,
                      r_v_local=base.r_local.copy(), e_values=base.e_values, epsilon=base.epsilon,
                      lambda_upper=lambda_upper, lambda_lower=lambda_lower)


def accel_step(state: AccelState, splitting: Splitting, indices: Sequence[int],
               p_m: Optional[int] = None, params: Optional[AccelParams] = None,
               executor: Optional[Executor] = None, refresh_interval: int = 50) -> AccelState:
    """
    One cycle of the accelerated iteration.

    w = alpha v + (1 - alpha) u; local solves at the residual of w;
    u_new = w + xi c; v_new = beta v + (1 - beta) w + eta c.

    Args:
        state: Current state
        splitting: Built splitting
        indices: Index set I_m
        p_m: Subset size used for the parameters (default: realized |I_m|)
        params: Explicit parameters overriding accel_params()
        executor: Optional executor for the local solves
        refresh_interval: Recompute both residuals every this many steps

    Returns:
        New state; its last_step describes the cycle
    """
    indices = _check_indices(indices, splitting.n)
    realized = int(np.unique(indices).size)
    f_m = splitting.n + 1 - realized
    if realized == 0:
        record = StepRecord(state.m, 0, f_m, 0.0, state.epsilon, flags=('empty',))
        return replace(state, m=state.m + 1, last_step=record)

    if params is None:
        params = accel_params(p_m if p_m is not None else realized, splitting.n,
                              state.lambda_upper, state.lambda_lower)
    r_w = params.alpha * state.r_v_local + (1.0 - params.alpha) * state.r_u_local
    correction = compute_correction(splitting, r_w, indices, executor)
    epsilon, _ = _mixed_indicator(state.e_values, correction)
    return _accel_update(state, splitting, correction, params, r_w, epsilon, refresh_interval)


@dataclass
class RunSettings:
    """Method, relaxation and termination of one run."""

    method: str = 'one-step'
    relaxation: Relaxation = STEEPEST_DESCENT
    tolerance: float = 1e-6
    max_steps: int = 200
    lambda_upper: Optional[float] = None
    lambda_lower: Optional[float] = None
    p_policy: str = 'exact'
    p_lower: Optional[int] = None
    refresh_interval: int = 50
    max_workers: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method '{self.method}'")
        if self.p_policy not in P_POLICIES:
            raise ConfigError(f"unknown p policy '{self.p_policy}'")
        if self.tolerance <= 0.0 or self.max_steps < 0:
            raise ConfigError("tolerance must be positive and max_steps nonnegative")
        if self.method == 'accelerated':
            if self.lambda_upper is None or self.lambda_lower is None:
                raise ConfigError("accelerated method needs lambda_upper and lambda_lower")
            if self.p_policy == 'lower-bound' and (self.p_lower is None or self.p_lower < 1):
                raise ConfigError("p policy 'lower-bound' needs p_lower >= 1")


@dataclass
class RunReport:
    """Per-step records and outcome of one run."""

    records: List[StepRecord] = field(default_factory=list)
    reason: str = ''
    iterations: int = 0
    seed: int = 0
    config: Dict[str, object] = field(default_factory=dict)
    epsilon_init: float = math.nan
    solution: Optional[np.ndarray] = None
    final_drift: float = math.nan

    @property
    def converged(self) -> bool:
        return self.reason == 'converged'

    def epsilons(self) -> np.ndarray:
        return np.array([r.epsilon for r in self.records])

    def relative_epsilons(self) -> np.ndarray:
        if not self.epsilon_init > 0.0:
            return np.zeros(len(self.records))
        return self.epsilons() / self.epsilon_init

    def flagged(self, flag: str) -> List[int]:
        """Steps carrying a given flag."""
        return [r.m for r in self.records if flag in r.flags]

    def rows(self) -> List[tuple]:
        return [r.csv_row() for r in self.records]

    def to_csv(self, path: str, config_hash: str = '') -> str:
        """Write the records as CSV with a provenance comment line."""
        provenance = {'config_hash': config_hash, 'seed': self.seed}
        return write_csv(path, CSV_COLUMNS, self.rows(), provenance)

    def get_summary(self) -> Dict[str, object]:
        return {
            'reason': self.reason,
            'iterations': self.iterations,
            'seed': self.seed,
            'epsilon_init': self.epsilon_init,
            'epsilon_final': self.records[-1].epsilon if self.records else math.nan,
            'empty_cycles': len(self.flagged('empty')),
            'final_drift': self.final_drift,
        }


def _converged(epsilon: float, epsilon_init: float, tolerance: float) -> bool:
    return epsilon_init == 0.0 or epsilon <= tolerance * epsilon_init


def run(splitting: Splitting, source: IndexSource, settings: RunSettings,
        seed: int = 0, config: Optional[Dict[str, object]] = None,
        x0: Optional[np.ndarray] = None) -> RunReport:
    """
    Iterate from x0 = 0 until epsilon_m <= tolerance * epsilon_0 or max_steps.

    Cycle m draws I_m, solves the subproblems and evaluates epsilon_m; if
    the stopping test holds the run ends with m iterations, otherwise the
    update is applied.

    Args:
        splitting: Built splitting for the problem
        source: Supplier of the index sets I_m
        settings: Method, relaxation and termination
        seed: Seed echoed into the report
        config: Configuration echoed into the report
        x0: Optional initial iterate

    Returns:
        RunReport with one record per cycle
    """
    report = RunReport(seed=seed, config=dict(config or {}))
    executor = ThreadPoolExecutor(max_workers=settings.max_workers) \
        if settings.max_workers > 1 else None
    try:
        if settings.method == 'accelerated':
            x = _run_accelerated(splitting, source, settings, report, executor, x0)
        else:
            x = _run_one_step(splitting, source, settings, report, executor, x0)
    finally:
        if executor is not None:
            executor.shutdown(wait=True)

    report.solution = x
    logger.info("Run finished: %s after %d iterations (epsilon ratio %.3e)",
                report.reason, report.iterations,
                report.relative_epsilons()[-1] if report.records else 0.0)
    return report


def _run_one_step(splitting, source, settings, report, executor, x0) -> np.ndarray:
    state = initial_state(splitting, x0, executor)
    report.epsilon_init = state.epsilon
    for m in range(settings.max_steps + 1):
        indices, f_m = source.index_set(m)
        indices = _check_indices(indices, splitting.n)
        p_m = int(np.unique(indices).size)

        if p_m == 0:
            logger.debug("Cycle %d: empty index set", m)
            report.records.append(StepRecord(m, 0, f_m, 0.0, state.epsilon, flags=('empty',)))
            state = replace(state, m=m + 1)
            continue

        correction = compute_correction(splitting, state.r_local, indices, executor)
        epsilon, e_values = _mixed_indicator(state.e_values, correction)

        if _converged(epsilon, report.epsilon_init, settings.tolerance) or m == settings.max_steps:
            report.records.append(StepRecord(m, p_m, f_m, 0.0, epsilon))
            report.reason = 'converged' if _converged(
                epsilon, report.epsilon_init, settings.tolerance) else 'max-steps'
            report.iterations = m
            break

        xi, degenerate = _resolve_xi(settings.relaxation, state, splitting, correction)
        x, r_local, steps, refreshed = _advance(state, splitting, correction, xi,
                                                settings.refresh_interval)
        flags = tuple(flag for flag, on in (('zero-correction', degenerate),
                                            ('coarse-lagged', 0 not in correction.indicators),
                                            ('refresh', refreshed)) if on)
        report.records.append(StepRecord(m, p_m, f_m, xi, epsilon, flags=flags))
        state = IterationState(m=m + 1, x=x, r_local=r_local, e_values=e_values,
                               epsilon=epsilon, steps_since_refresh=steps)
    else:
        report.reason = 'max-steps'
        report.iterations = settings.max_steps

    report.final_drift = residual_drift(splitting, state.x, state.r_local)
    return state.x


def _run_accelerated(splitting, source, settings, report, executor, x0) -> np.ndarray:
    state = initial_accel_state(splitting, settings.lambda_upper, settings.lambda_lower,
                                x0, executor)
    report.epsilon_init = state.epsilon
    for m in range(settings.max_steps + 1):
        indices, f_m = source.index_set(m)
        indices = _check_indices(indices, splitting.n)
        realized = int(np.unique(indices).size)

        if realized == 0:
            logger.debug("Cycle %d: empty index set", m)
            report.records.append(StepRecord(m, 0, f_m, 0.0, state.epsilon, flags=('empty',)))
            state = replace(state, m=m + 1)
            continue

        p_used = realized if settings.p_policy == 'exact' else min(settings.p_lower, splitting.n + 1)
        params = accel_params(p_used, splitting.n, state.lambda_upper, state.lambda_lower)

        # Indicator at w, evaluated before deciding whether to stop
        r_w = params.alpha * state.r_v_local + (1.0 - params.alpha) * state.r_u_local
        probe = compute_correction(splitting, r_w, indices, executor)
        epsilon, _ = _mixed_indicator(state.e_values, probe)

        stop = _converged(epsilon, report.epsilon_init, settings.tolerance)
        if stop or m == settings.max_steps:
            report.records.append(StepRecord(m, realized, f_m, 0.0, epsilon, eta_m=params.eta,
                                             alpha_m=params.alpha, beta_m=params.beta))
            report.reason = 'converged' if stop else 'max-steps'
            report.iterations = m
            break

        state = _accel_update(state, splitting, probe, params, r_w, epsilon,
                              settings.refresh_interval)
        report.records.append(StepRecord(m, realized, f_m, params.xi, epsilon, eta_m=params.eta,
                                         alpha_m=params.alpha, beta_m=params.beta,
                                         flags=state.last_step.flags))
    else:
        report.reason = 'max-steps'
        report.iterations = settings.max_steps

    report.final_drift = residual_drift(splitting, state.x_u, state.r_u_local)
    return state.x_u


def _accel_update(state: AccelState, splitting: Splitting, correction: Correction,
                  params: AccelParams, r_w: np.ndarray, epsilon: float,
                  refresh_interval: int) -> AccelState:
    alpha, beta = params.alpha, params.beta
    x_w = alpha * state.x_v + (1.0 - alpha) * state.x_u
    _, e_values = _mixed_indicator(state.e_values, correction)
    c, ac = correction.vector, correction.ac_stacked

    x_u = x_w + params.xi * c
    r_u = r_w - params.xi * ac
    x_v = beta * state.x_v + (1.0 - beta) * x_w + params.eta * c
    r_v = beta * state.r_v_local + (1.0 - beta) * r_w - params.eta * ac

    steps = state.steps_since_refresh + 1
    flags = ['coarse-lagged'] if 0 not in correction.indicators else []
    if refresh_interval and steps >= refresh_interval:
        problem = splitting.problem
        r_u = splitting.stack(problem.b - problem.A @ x_u)
        r_v = splitting.stack(problem.b - problem.A @ x_v)
        steps = 0
        flags.append('refresh')

    p_m = int(np.unique(correction.indices).size)
    record = StepRecord(state.m, p_m, splitting.n + 1 - p_m, params.xi, epsilon,
                        eta_m=params.eta, alpha_m=alpha, beta_m=beta, flags=tuple(flags))
    return replace(state, m=state.m + 1, x_u=x_u, x_v=x_v, r_u_local=r_u, r_v_local=r_v,
                   e_values=e_values, epsilon=epsilon, steps_since_refresh=steps,
                   last_step=record)
