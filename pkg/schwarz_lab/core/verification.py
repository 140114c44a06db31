"""
Bound verification suite.
Checks the convergence estimates of the iterations against the dense
oracle, plus fault-model calibration and the cost formulas.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import List, Sequence

import numpy as np

from ..utils.rng import derive_rng
from .cost_model import (CostConstants, cycle_time_local, cycle_time_master_slave,
                         cycle_time_server_client)
from .errors import SchwarzLabError
from .faults import (PartitionRates, WeibullParams, build_groups, corollary_bound,
                     generate_schedules, local_comm_cycle)
from .iteration import accel_step, initial_accel_state, initial_state, one_step
from .oracle import (assemble_P_dense, energy_norm_sq, exact_solution,
                     exhaustive_expectation)
from .sampling import SamplerConfig, sample_index_set
from .splitting import Splitting

logger = logging.getLogger(__name__)

# Relative round-off allowance on exact inequalities
ROUNDOFF = 1e-12

WEIBULL_CALIBRATION = (
    # (k1, lambda1, k2, lambda2, expected rate, band)
    (0.5, 18.0, 1.0, 3.0, 0.10, 0.02),
    (0.5, 70.0, 1.0, 1.0, 0.015, 0.005),
)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ''

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def _random_error(N: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal(N)


def check_one_step_bound(splitting: Splitting, seed: int = 0,
                         factors: Sequence[float] = (0.5, 1.0, 1.5)) -> CheckResult:
    """
    Exact one-step expectation over all size-p subsets against
    (1 - lambda_max xi (2 - lambda_max xi) p / (kappa (n+1))) ||e||_A^2.

    Args:
        splitting: Small splitting (n+1 subsets must fit the oracle cap)
        seed: Seed of the random error
        factors: Relaxations as multiples of 1/lambda_max
    """
    name = 'one-step expectation bound (exhaustive)'
    data = assemble_P_dense(splitting)
    e = _random_error(data.A.shape[0], derive_rng(seed, 'exhaustive-error'))
    norm_sq = energy_norm_sq(data.A, e)
    total = data.n + 1

    worst = -math.inf
    failures = []
    for factor in factors:
        xi = factor / data.lambda_max
        contraction = data.lambda_max * xi * (2.0 - data.lambda_max * xi)
        for p in range(1, total + 1):
            expected = exhaustive_expectation(data, e, p, xi)
            bound = (1.0 - contraction * p / (data.kappa * total)) * norm_sq
            worst = max(worst, expected / bound)
            if expected > bound * (1.0 + ROUNDOFF):
                failures.append(f"xi={factor:g}/lambda_max p={p}: {expected:.6g} > {bound:.6g}")

    detail = f"max E/bound = {worst:.6f} over {len(factors) * total} cases"
    if failures:
        detail += '; ' + '; '.join(failures)
    return CheckResult(name, not failures, detail)


def check_accelerated_bound(splitting: Splitting, trajectories: int = 2000, steps: int = 10,
                            seed: int = 0, p: int = 2) -> CheckResult:
    """
    Mean squared energy error of the accelerated iteration (exact spectral
    bounds, uniform size-p subsets) against 2 prod(1 - p/((n+1) sqrt(kappa))) ||u||_A^2.

    Args:
        splitting: Small splitting
        trajectories: Number of independent runs
        steps: Cycles per run
        seed: Master seed
        p: Subset size per cycle
    """
    name = 'accelerated expectation bound (Monte Carlo)'
    data = assemble_P_dense(splitting)
    u = exact_solution(splitting)
    A = data.A
    n = splitting.n
    lam_up, lam_low = data.lambda_max, data.lambda_min
    sampler = SamplerConfig(mode='uniform', p=p)
    base = initial_accel_state(splitting, lam_up, lam_low)

    errors = np.empty((trajectories, steps + 1))
    for t in range(trajectories):
        rng = derive_rng(seed, 'accelerated-trajectory', t)
        state = base
        errors[t, 0] = energy_norm_sq(A, u - state.x_u)
        for m in range(1, steps + 1):
            indices = sample_index_set(sampler, n, p, rng)
            state = accel_step(state, splitting, indices, refresh_interval=0)
            errors[t, m] = energy_norm_sq(A, u - state.x_u)

    rate = 1.0 - p / ((n + 1) * math.sqrt(lam_up / lam_low))
    u_norm = energy_norm_sq(A, u)
    failures = []
    worst = -math.inf
    for m in range(steps + 1):
        mean = float(errors[:, m].mean())
        se = float(errors[:, m].std(ddof=1) / math.sqrt(trajectories)) if trajectories > 1 else 0.0
        bound = 2.0 * rate ** m * u_norm
        worst = max(worst, mean / bound)
        if mean > bound + 3.0 * se:
            failures.append(f"m={m}: {mean:.6g} > {bound:.6g} + 3*{se:.3g}")

    detail = f"max mean/bound = {worst:.6f} over {steps} cycles, {trajectories} runs"
    if failures:
        detail += '; ' + '; '.join(failures)
    return CheckResult(name, not failures, detail)


def check_single_fault_bound(splitting: Splitting, l: int = 1, samples: int = 4000,
                             seed: int = 0, failed_node: int = 1) -> CheckResult:
    """
    Per-cycle error reduction with one persistently failed node whose
    redundancy group of size l covers it, against 1 - (l/(l+1))^2 / kappa.

    The failed node and its group form one part executed at rate l/(l+1);
    every other index is executed, so xi = l / ((l+1) lambda_max).

    Args:
        splitting: Small splitting
        l: Redundancy level
        samples: Number of simulated failure cycles
        seed: Master seed
        failed_node: Node that stays down
    """
    name = f'single-fault reduction bound (l={l})'
    data = assemble_P_dense(splitting)
    n = splitting.n
    centers = {i: splitting.subdomain_center(i) for i in range(1, n + 1)}
    groups = build_groups(splitting.neighbors, l, centers)
    group = groups[failed_node]
    if group.clamped:
        return CheckResult(name, False, f"node {failed_node} has only {group.size} neighbors")

    part = [failed_node, *group.members]
    others = [[i] for i in range(n + 1) if i not in part]
    rates = PartitionRates([part] + others, [group.size] + [1] * len(others))
    xi, factor = corollary_bound(rates, data.kappa, data.lambda_max)

    e = _random_error(data.A.shape[0], derive_rng(seed, 'corollary-error'))
    ratios = np.empty(samples)
    for k in range(samples):
        executed, _ = local_comm_cycle(n, [failed_node], groups,
                                       derive_rng(seed, 'corollary-cycle', k))
        norm_sq = energy_norm_sq(data.A, e)
        step = sum(data.weights[i] * data.local_correction(i, e) for i in executed)
        e = e - xi * step
        ratios[k] = energy_norm_sq(data.A, e) / norm_sq
        e = e / math.sqrt(energy_norm_sq(data.A, e))

    mean = float(ratios.mean())
    se = float(ratios.std(ddof=1) / math.sqrt(samples))
    passed = mean <= factor + 3.0 * se
    return CheckResult(name, passed, f"mean reduction {mean:.6f} (se {se:.2g}), bound {factor:.6f}")


def check_residual_identity(splitting: Splitting, cycles: int = 100, seed: int = 0,
                            tol: float = 1e-9) -> CheckResult:
    """
    r_new,i = (1 - xi omega_i) r_i for every corrected subdomain i whose
    coupled subdomains were not corrected in the same cycle.

    Index sets are drawn from {1..n} so no coarse correction is mixed in.
    """
    name = 'local residual identity'
    n = splitting.n
    coupled = {i: set() for i in range(1, n + 1)}
    for i, j in splitting.coupling_pairs():
        if i != j:
            coupled[i].add(j)

    rng = derive_rng(seed, 'residual-identity')
    state = initial_state(splitting)
    checked = 0
    worst = 0.0
    for _ in range(cycles):
        size = int(rng.integers(1, n + 1))
        indices = np.sort(rng.choice(np.arange(1, n + 1), size=size, replace=False))
        xi = float(rng.uniform(0.1, 1.9))
        chosen = set(int(i) for i in indices)
        before = state.r_local
        state = one_step(state, splitting, indices, relaxation=xi, refresh_interval=0)
        for i in chosen:
            if coupled[i] & chosen:
                continue
            block = splitting.block(i)
            expected = (1.0 - xi * splitting.weights[i]) * before[block]
            scale = float(np.linalg.norm(before[block]))
            if scale == 0.0:
                continue
            worst = max(worst, float(np.linalg.norm(state.r_local[block] - expected)) / scale)
            checked += 1

    passed = checked > 0 and worst <= tol
    return CheckResult(name, passed, f"{checked} subdomain updates, max relative deviation {worst:.3e}")


def check_weibull_calibration(seed: int = 0, nodes: int = 400, horizon: int = 200) -> CheckResult:
    """Realized failure rates of the reference Weibull scenarios."""
    name = 'Weibull failure-rate calibration'
    parts = []
    passed = True
    for k1, lambda1, k2, lambda2, target, band in WEIBULL_CALIBRATION:
        _, rate = generate_schedules(nodes, WeibullParams(k1, lambda1), WeibullParams(k2, lambda2),
                                     horizon, seed)
        ok = abs(rate - target) <= band
        passed = passed and ok
        parts.append(f"lambda1={lambda1:g},lambda2={lambda2:g}: {rate:.4f} (target {target}+-{band})")
    return CheckResult(name, passed, '; '.join(parts))


def check_cost_formulas(seed: int = 0, grid_points: int = 100) -> CheckResult:
    """Hand-evaluated budgets plus monotonicity on a random constant grid."""
    name = 'cost formulas'
    failures = []
    cases = (
        (cycle_time_master_slave, CostConstants(1, 1, 1, 1, M=3, n=4), 46.0),
        (cycle_time_local, CostConstants(10, 1, 1, 1, M=400, n=400, l_bar=8), 12416.0),
        (cycle_time_server_client, CostConstants(10, 1, 1, 1, M=400, n=400, L=20), 28900.0),
    )
    for func, constants, expected in cases:
        value = func(constants)
        if value != expected:
            failures.append(f"{func.__name__} = {value}, expected {expected}")
    for func in (cycle_time_master_slave, cycle_time_local, cycle_time_server_client):
        if func(CostConstants(M=0, n=1, l_bar=0, L=1)) != 0.0:
            failures.append(f"{func.__name__} of zero constants is not 0")

    rng = derive_rng(seed, 'cost-grid')
    for _ in range(grid_points):
        base = CostConstants(*rng.uniform(0.0, 10.0, 4), M=int(rng.integers(1, 1000)),
                             n=int(rng.integers(1, 1000)), l_bar=int(rng.integers(0, 9)), L=1)
        base = replace(base, L=int(rng.integers(1, base.n + 1)))
        bumped = [
            replace(base, solve=base.solve + 1.0), replace(base, update=base.update + 1.0),
            replace(base, connect=base.connect + 1.0), replace(base, transmit=base.transmit + 1.0),
            replace(base, M=base.M + 1), replace(base, n=base.n + 1),
            replace(base, l_bar=base.l_bar + 1),
        ]
        for func in (cycle_time_master_slave, cycle_time_local, cycle_time_server_client):
            reference = func(base)
            if any(func(c) < reference * (1.0 - ROUNDOFF) for c in bumped):
                failures.append(f"{func.__name__} not monotone at {base}")
                break

    detail = 'exact values and monotonicity hold' if not failures else '; '.join(failures[:5])
    return CheckResult(name, not failures, detail)


def run_all(splitting: Splitting, seed: int = 0, trajectories: int = 2000,
            levels: Sequence[int] = (1, 2, 3)) -> List[CheckResult]:
    """
    Run the whole suite on a small splitting.

    A check that raises is reported as failed with the error message.
    """
    checks = [
        ('one-step expectation bound (exhaustive)', lambda: check_one_step_bound(splitting, seed)),
        ('accelerated expectation bound (Monte Carlo)',
         lambda: check_accelerated_bound(splitting, trajectories, 10, seed)),
    ]
    for l in levels:
        checks.append((f'single-fault reduction bound (l={l})',
                       lambda l=l: check_single_fault_bound(splitting, l, seed=seed)))
    checks += [
        ('local residual identity', lambda: check_residual_identity(splitting, 100, seed)),
        ('Weibull failure-rate calibration', lambda: check_weibull_calibration(seed)),
        ('cost formulas', lambda: check_cost_formulas(seed)),
    ]

    results = []
    for name, check in checks:
        try:
            result = check()
        except SchwarzLabError as e:
            result = CheckResult(name, False, f"error: {e}")
        logger.info(result.line())
        results.append(result)
    return results
