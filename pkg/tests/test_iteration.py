"""Tests for the one-step and accelerated iterations and the run loop."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from schwarz_lab.core.errors import ConfigError, ConsistencyError, DimensionError, EstimationError
from schwarz_lab.core.fem import GridSpec
from schwarz_lab.core.iteration import (AccelParams, RunSettings, accel_params, accel_step,
                                        compute_correction, error_indicator, initial_accel_state,
                                        initial_state, one_step, run, steepest_descent_xi)
from schwarz_lab.core.oracle import energy_norm_sq, exact_solution, omega_norm
from schwarz_lab.core.sampling import (FixedIndexSource, IndexSource, RandomIndexSource,
                                       SamplerConfig)
from schwarz_lab.core.splitting import build_splitting
from schwarz_lab.utils.csvio import read_csv


class ScriptedSource(IndexSource):
    """Index sets from a list; the last entry repeats."""

    name = 'scripted'

    def __init__(self, n, script):
        self.n = n
        self.script = script

    def index_set(self, m):
        chosen = np.asarray(self.script[min(m, len(self.script) - 1)], dtype=np.int64)
        return chosen, self.n + 1 - np.unique(chosen).size


def _energy_error(splitting, u, x):
    return energy_norm_sq(splitting.problem.A.toarray(), u - x)


class TestOneStep:
    def test_single_subdomain_is_exact(self, single_splitting):
        u = exact_solution(single_splitting)
        state = one_step(initial_state(single_splitting), single_splitting, [0, 1])
        assert state.last_step.xi_m == pytest.approx(1.0, rel=1e-12)
        assert_allclose(state.x, u, atol=1e-12)

    def test_zero_residual_is_flagged(self, zero_rhs_splitting):
        state = initial_state(zero_rhs_splitting)
        correction = compute_correction(zero_rhs_splitting, state.r_local, [0, 1, 2, 3, 4])
        xi, flag = steepest_descent_xi(state, zero_rhs_splitting, correction)
        assert xi == 0.0
        assert flag
        new_state = one_step(state, zero_rhs_splitting, [0, 1, 2, 3, 4])
        assert 'zero-correction' in new_state.last_step.flags
        assert not new_state.x.any()

    def test_correction_matches_dense(self, small_splitting, small_dense, rng):
        u = exact_solution(small_splitting)
        x0 = rng.standard_normal(49)
        state = initial_state(small_splitting, x0)
        correction = compute_correction(small_splitting, state.r_local, [0, 2, 3])
        expected = sum(small_dense.weights[i] * small_dense.local_correction(i, u - x0)
                       for i in (0, 2, 3))
        assert_allclose(correction.vector, expected, atol=1e-11)

    def test_steepest_descent_is_the_energy_minimizer(self, small_splitting, rng):
        A = small_splitting.problem.A.toarray()
        u = exact_solution(small_splitting)
        x0 = rng.standard_normal(49)
        state = initial_state(small_splitting, x0)
        correction = compute_correction(small_splitting, state.r_local, [1, 4])
        xi, flag = steepest_descent_xi(state, small_splitting, correction)
        c = correction.vector
        e = u - x0
        assert not flag
        assert xi == pytest.approx((e @ A @ c) / (c @ A @ c), rel=1e-10)

    def test_steepest_descent_beats_fixed_relaxation(self, small_splitting, small_dense, rng):
        u = exact_solution(small_splitting)
        x0 = rng.standard_normal(49)
        state = initial_state(small_splitting, x0)
        best = _energy_error(small_splitting, u, one_step(state, small_splitting, [0, 1, 3]).x)
        for xi in np.linspace(0.1, 1.9 / small_dense.lambda_max, 12):
            fixed = one_step(state, small_splitting, [0, 1, 3], relaxation=float(xi))
            assert best <= _energy_error(small_splitting, u, fixed.x) * (1 + 1e-12)

    def test_full_set_contraction(self, small_splitting, small_dense):
        u = exact_solution(small_splitting)
        bound = math.sqrt(1.0 - 1.0 / small_dense.kappa)
        state = initial_state(small_splitting)
        previous = math.sqrt(_energy_error(small_splitting, u, state.x))
        for _ in range(6):
            state = one_step(state, small_splitting, range(5))
            current = math.sqrt(_energy_error(small_splitting, u, state.x))
            assert current <= bound * previous * (1 + 1e-9)
            previous = current

    def test_empty_index_set(self, small_splitting):
        state = initial_state(small_splitting)
        new_state = one_step(state, small_splitting, [])
        assert new_state.last_step.flags == ('empty',)
        assert new_state.last_step.f_m == 5
        assert new_state.m == 1
        assert_array_equal(new_state.x, state.x)

    def test_coarse_lagged_flag(self, small_splitting):
        state = one_step(initial_state(small_splitting), small_splitting, [1, 2])
        assert 'coarse-lagged' in state.last_step.flags

    def test_index_out_of_range(self, small_splitting):
        with pytest.raises(DimensionError):
            one_step(initial_state(small_splitting), small_splitting, [5])

    def test_unknown_relaxation(self, small_splitting):
        with pytest.raises(ConfigError):
            one_step(initial_state(small_splitting), small_splitting, [0], relaxation='fastest')

    def test_refresh_keeps_residual_consistent(self, small_splitting):
        state = initial_state(small_splitting)
        for _ in range(4):
            state = one_step(state, small_splitting, [0, 2, 4], refresh_interval=2)
        assert state.steps_since_refresh == 0
        assert 'refresh' in state.last_step.flags
        problem = small_splitting.problem
        assert_allclose(state.residual(small_splitting), problem.b - problem.A @ state.x,
                        atol=1e-13)


class TestAccelerated:
    def test_parameters_for_unit_condition(self):
        params = accel_params(4, 3, 2.0, 2.0)
        assert params.beta == pytest.approx(0.0, abs=1e-15)
        assert params.alpha == pytest.approx(0.5)
        assert params.eta == pytest.approx(0.5)
        assert params.xi == pytest.approx(0.5)

    def test_parameters_with_fixed_bounds(self):
        params = accel_params(401, 400, 3.33, 0.9)
        assert params.xi == pytest.approx(0.3, abs=1e-3)
        assert params.eta == pytest.approx(0.577, abs=1e-3)

    def test_parameters_for_partial_sets(self):
        params = accel_params(2, 3, 4.0, 1.0)
        assert params.beta == pytest.approx(0.75)
        assert params.alpha == pytest.approx(0.2)

    def test_invalid_parameters(self):
        with pytest.raises(EstimationError):
            accel_params(2, 3, 1.0, 2.0)
        with pytest.raises(DimensionError):
            accel_params(0, 3, 4.0, 1.0)

    def test_exact_solution_is_a_fixed_point(self, small_splitting, small_dense):
        u = exact_solution(small_splitting)
        state = initial_accel_state(small_splitting, small_dense.lambda_max,
                                    small_dense.lambda_min, x0=u)
        new_state = accel_step(state, small_splitting, range(5))
        assert_allclose(new_state.x_u, u, atol=1e-12)
        assert_allclose(new_state.x_v, u, atol=1e-12)

    def test_lyapunov_quantity_decreases(self, small_splitting, small_dense):
        u = exact_solution(small_splitting)
        lam_up, lam_low = small_dense.lambda_max, small_dense.lambda_min
        A = small_dense.A
        factor = 1.0 - 5 / (5 * math.sqrt(lam_up / lam_low))

        def lyapunov(state):
            return energy_norm_sq(A, u - state.x_u) + lam_low * omega_norm(small_dense, u - state.x_v)

        state = initial_accel_state(small_splitting, lam_up, lam_low)
        previous = lyapunov(state)
        for _ in range(5):
            state = accel_step(state, small_splitting, range(5), refresh_interval=0)
            current = lyapunov(state)
            assert current <= factor * previous * (1 + 1e-9)
            previous = current

    def test_degenerate_parameters_reduce_to_one_step(self, small_splitting):
        x0 = np.linspace(0.0, 1.0, 49)
        state = initial_accel_state(small_splitting, 4.0, 1.0, x0=x0)
        params = AccelParams(alpha=1.0, beta=1.0, xi=0.3, eta=0.0)
        accelerated = accel_step(state, small_splitting, [0, 2], params=params)
        plain = one_step(initial_state(small_splitting, x0), small_splitting, [0, 2], relaxation=0.3)
        assert_allclose(accelerated.x_u, plain.x, atol=1e-13)
        assert_allclose(accelerated.x_v, x0, atol=1e-13)


class TestErrorIndicator:
    def test_sum_of_local_terms(self):
        assert error_indicator([1.0, 2.0, 1.0]) == pytest.approx(2.0)

    def test_round_off_is_tolerated(self):
        assert error_indicator([4.0, -1e-15]) == pytest.approx(2.0)

    @pytest.mark.parametrize("values", [[1.0, -1e-6], [1.0, math.nan]])
    def test_inconsistent_values(self, values):
        with pytest.raises(ConsistencyError):
            error_indicator(values)

    def test_single_subdomain_gives_energy_error(self, single_splitting):
        state = initial_state(single_splitting)
        u = exact_solution(single_splitting)
        expected = energy_norm_sq(single_splitting.problem.A.toarray(), u)
        assert error_indicator(state.e_values) ** 2 == pytest.approx(expected, rel=1e-12)

    def test_exact_solution_gives_zero(self, small_splitting):
        state = initial_state(small_splitting, exact_solution(small_splitting))
        assert error_indicator(state.e_values) == pytest.approx(0.0, abs=1e-12)


class TestRun:
    def test_zero_rhs_stops_immediately(self, zero_rhs_splitting):
        report = run(zero_rhs_splitting, FixedIndexSource(4), RunSettings())
        assert report.converged
        assert report.iterations == 0
        assert report.records[0].epsilon == 0.0
        assert report.records[0].xi_m == 0.0

    def test_converges_to_exact_solution(self, small_splitting):
        settings = RunSettings(tolerance=1e-10, max_steps=200)
        report = run(small_splitting, FixedIndexSource(4), settings, seed=3)
        u = exact_solution(small_splitting)
        assert report.converged
        assert report.relative_epsilons()[-1] <= 1e-10
        assert_allclose(report.solution, u, rtol=1e-6, atol=1e-9)

    def test_random_subsets_converge(self, small_splitting):
        source = RandomIndexSource(SamplerConfig(p=2), n=4, seed=9)
        report = run(small_splitting, source, RunSettings(tolerance=1e-6, max_steps=500))
        assert report.converged
        assert all(r.p_m == 2 and r.f_m == 3 for r in report.records)

    def test_accelerated_run_converges(self, small_splitting, small_dense):
        settings = RunSettings(method='accelerated', lambda_upper=small_dense.lambda_max,
                               lambda_lower=small_dense.lambda_min, max_steps=300)
        report = run(small_splitting, FixedIndexSource(4), settings)
        assert report.converged
        assert report.records[0].alpha_m == pytest.approx(
            1.0 / (1.0 + math.sqrt(small_dense.kappa)))

    def test_lower_bound_policy(self, small_splitting, small_dense):
        settings = RunSettings(method='accelerated', lambda_upper=small_dense.lambda_max,
                               lambda_lower=small_dense.lambda_min, p_policy='lower-bound',
                               p_lower=2, max_steps=400)
        source = RandomIndexSource(SamplerConfig(p=[5, 3]), n=4, seed=1)
        report = run(small_splitting, source, settings)
        expected = accel_params(2, 4, small_dense.lambda_max, small_dense.lambda_min)
        assert report.converged
        assert all(r.beta_m == pytest.approx(expected.beta) for r in report.records)

    def test_empty_cycles(self, small_splitting):
        report = run(small_splitting, FixedIndexSource(4, []), RunSettings(max_steps=5))
        assert report.reason == 'max-steps'
        assert report.iterations == 5
        assert len(report.flagged('empty')) == 6

    def test_empty_cycle_inside_run(self, small_splitting):
        source = ScriptedSource(4, [[0, 1, 2, 3, 4], [], [0, 1, 2, 3, 4]])
        report = run(small_splitting, source, RunSettings(max_steps=100))
        assert report.converged
        assert report.flagged('empty') == [1]
        assert report.records[1].f_m == 5

    @pytest.mark.parametrize("method", ['one-step', 'accelerated'])
    def test_empty_first_cycle_reports_initial_indicator(self, small_splitting, small_dense,
                                                         tmp_path, method):
        settings = RunSettings(method=method, lambda_upper=small_dense.lambda_max,
                               lambda_lower=small_dense.lambda_min, max_steps=300)
        source = ScriptedSource(4, [[], [0, 1, 2, 3, 4]])
        report = run(small_splitting, source, settings)
        first = report.records[0]
        assert first.flags == ('empty',)
        assert math.isfinite(first.epsilon)
        assert first.epsilon == report.epsilon_init
        assert report.records[1].epsilon == pytest.approx(report.epsilon_init, rel=1e-12)
        assert report.converged
        path = tmp_path / 'run.csv'
        report.to_csv(str(path), 'abc')
        assert 'nan' not in path.read_text().lower()

    def test_max_steps(self, small_splitting):
        report = run(small_splitting, FixedIndexSource(4), RunSettings(tolerance=1e-14, max_steps=3))
        assert report.reason == 'max-steps'
        assert report.iterations == 3
        assert len(report.records) == 4

    def test_thread_pool_gives_identical_records(self, small_splitting):
        source = RandomIndexSource(SamplerConfig(p=3), n=4, seed=2)
        serial = run(small_splitting, source, RunSettings(max_steps=50))
        parallel = run(small_splitting, source, RunSettings(max_steps=50, max_workers=4))
        assert serial.rows() == parallel.rows()

    def test_csv_output(self, small_splitting, tmp_path):
        report = run(small_splitting, FixedIndexSource(4), RunSettings(), seed=17)
        path = report.to_csv(str(tmp_path / 'out' / 'run.csv'), 'abc123')
        provenance, columns, rows = read_csv(path)
        assert provenance == {'config_hash': 'abc123', 'seed': '17'}
        assert columns == ['m', 'p_m', 'f_m', 'xi_m', 'epsilon']
        assert len(rows) == report.iterations + 1
        assert float(rows[-1][4]) == report.records[-1].epsilon

    @pytest.mark.parametrize("kwargs", [
        {'method': 'two-step'},
        {'p_policy': 'guess'},
        {'tolerance': 0.0},
        {'method': 'accelerated'},
        {'method': 'accelerated', 'lambda_upper': 3.0, 'lambda_lower': 1.0,
         'p_policy': 'lower-bound'},
    ])
    def test_invalid_settings(self, kwargs):
        with pytest.raises(ConfigError):
            RunSettings(**kwargs)


@pytest.mark.slow
@pytest.mark.parametrize("relaxation,expected", [('steepest-descent', 23), (0.4, 29)])
def test_full_size_configuration_without_faults(relaxation, expected):
    splitting = build_splitting(GridSpec(n1=400, n0=20), 6)
    report = run(splitting, FixedIndexSource(400), RunSettings(relaxation=relaxation))
    assert report.converged
    assert abs(report.iterations - expected) <= 2
