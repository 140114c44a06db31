"""Tests for the fault processes, redundancy groups and rate bounds."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from schwarz_lab.core.errors import FaultModelError
from schwarz_lab.core.faults import (FaultScenario, PartitionRates, RedundancyGroup,
                                     ScenarioIndexSource, WeibullParams, build_groups,
                                     constant_rate_failures, corollary_bound, covered_cycles,
                                     down_matrix, generate_schedules, local_comm_cycle,
                                     local_communication_scenario, master_slave_cycle,
                                     master_slave_scenario, multi_fault_rates, sample_weibull,
                                     uniform_interval_failures, weibull_master_slave_scenario)

FAILURE = WeibullParams(shape=0.5, scale=18.0)
REPAIR = WeibullParams(shape=1.0, scale=3.0)


def _grid_neighbors(n0):
    """Eight-neighborhood of an n0 x n0 cell grid with cell centers."""
    neighbors = {}
    centers = {}
    for cy in range(n0):
        for cx in range(n0):
            i = 1 + cy * n0 + cx
            centers[i] = (cx + 0.5, cy + 0.5)
            neighbors[i] = sorted(1 + y * n0 + x
                                  for y in range(max(0, cy - 1), min(n0, cy + 2))
                                  for x in range(max(0, cx - 1), min(n0, cx + 2))
                                  if (x, y) != (cx, cy))
    return neighbors, centers


class TestWeibull:
    def test_exponential_mean(self, rng):
        samples = sample_weibull(REPAIR, rng, 100_000)
        assert abs(samples.mean() - 3.0) < 0.05

    def test_heavy_tail_mean(self, rng):
        samples = sample_weibull(FAILURE, rng, 100_000)
        assert FAILURE.mean == pytest.approx(36.0)
        assert abs(samples.mean() - 36.0) < 1.0

    def test_extreme_quantiles(self):
        u = np.array([1e-12, 1e-9, 1e-6, 1e-3, 0.1, 0.5, 0.9, 1 - 1e-3, 1 - 1e-6, 1 - 1e-12])
        t = FAILURE.from_uniform(u)
        assert np.all(np.diff(t) < 0)
        assert_allclose(FAILURE.cdf(t), 1.0 - u, rtol=1e-6, atol=1e-14)
        assert FAILURE.from_uniform(1.0) == 0.0

    def test_invalid_parameters(self):
        with pytest.raises(FaultModelError):
            WeibullParams(shape=0.0, scale=1.0)


class TestSchedules:
    def test_covered_cycles(self):
        assert covered_cycles(3.2, 0.1) == (3, 4)
        assert covered_cycles(3.9, 0.2) == (3, 5)
        assert covered_cycles(5.0, 2.0) == (5, 7)

    def test_intervals_are_disjoint_and_inside_horizon(self):
        schedules, _ = generate_schedules(30, FAILURE, REPAIR, 150, seed=4)
        for schedule in schedules:
            previous_end = -1
            for start, end in schedule.down_intervals:
                assert 0 <= start < end <= 150
                assert start > previous_end
                previous_end = end

    def test_phase_query(self):
        schedules, _ = generate_schedules(10, FAILURE, REPAIR, 100, seed=8)
        for schedule in schedules:
            mask = schedule.down_mask()
            for m in range(100):
                assert schedule.is_down(m) == mask[m]
                assert schedule.phase(m) == ('down' if mask[m] else 'up')

    def test_rare_failures(self):
        _, rate = generate_schedules(50, WeibullParams(1.0, 1e9), WeibullParams(1.0, 1e-3),
                                     100, seed=1)
        assert rate < 1e-3

    @pytest.mark.parametrize("failure,repair,expected,band", [
        (WeibullParams(0.5, 18.0), WeibullParams(1.0, 3.0), 0.10, 0.02),
        (WeibullParams(0.5, 70.0), WeibullParams(1.0, 1.0), 0.015, 0.005),
    ])
    def test_calibrated_failure_rates(self, failure, repair, expected, band):
        _, rate = generate_schedules(400, failure, repair, 200, seed=2024)
        assert abs(rate - expected) <= band

    def test_nodes_are_independent(self):
        schedules, _ = generate_schedules(20, FAILURE, REPAIR, 10_000, seed=6)
        downs = down_matrix(schedules).astype(float)
        T = downs.shape[1]
        centered = downs - downs.mean(axis=1, keepdims=True)
        lags = np.arange(1, 500)
        autocorr = np.array([[x[:-lag] @ x[lag:] / (x @ x) for lag in lags] for x in centered])
        correlation = np.corrcoef(downs)

        # Bartlett: var(r_ab) = (1 + 2 sum_k rho_a(k) rho_b(k)) / T for independent series
        pairs = [(a, b) for a in range(20) for b in range(a + 1, 20)]
        sds = np.array([math.sqrt((1.0 + 2.0 * autocorr[a] @ autocorr[b]) / T) for a, b in pairs])
        values = np.array([correlation[a, b] for a, b in pairs])
        assert np.all(np.abs(values) < 5.0 * sds)
        assert abs(values.mean()) < 5.0 * math.sqrt(np.mean(sds ** 2) / len(pairs))

    def test_same_seed_same_schedules(self):
        first, _ = generate_schedules(5, FAILURE, REPAIR, 80, seed=3)
        second, _ = generate_schedules(5, FAILURE, REPAIR, 80, seed=3)
        assert [s.down_intervals for s in first] == [s.down_intervals for s in second]

    def test_horizon_must_be_positive(self):
        with pytest.raises(FaultModelError):
            generate_schedules(3, FAILURE, REPAIR, 0, seed=0)


class TestMasterSlave:
    def test_no_failures(self, rng):
        assert_array_equal(master_slave_cycle(4, 0, rng), np.arange(5))

    def test_constant_rate_subset_size(self):
        assert constant_rate_failures(400, 0.2) == 81
        assert constant_rate_failures(400, 0.0) == 0
        scenario = master_slave_scenario(400, 5, seed=1, rate=0.2)
        for m in range(5):
            assert scenario.executed(m).size == 320
        assert scenario.realized_rate == pytest.approx(81 / 401)

    def test_marginal_inclusion(self, rng):
        counts = np.zeros(5)
        for _ in range(20_000):
            counts[master_slave_cycle(4, 1, rng)] += 1
        assert np.all(np.abs(counts / 20_000 - 0.8) < 0.01)

    def test_uniform_interval(self, rng):
        values = {uniform_interval_failures(400, 40, 10, rng) for _ in range(2000)}
        assert min(values) == 30
        assert max(values) == 50

    def test_weibull_counts(self):
        scenario = weibull_master_slave_scenario(20, FAILURE, REPAIR, 50, seed=5)
        assert len(scenario.failures) == 50
        assert all(scenario.executed(m).size == 21 - scenario.failures[m] for m in range(50))

    def test_failure_count_range(self, rng):
        with pytest.raises(FaultModelError):
            master_slave_cycle(4, 6, rng)
        with pytest.raises(FaultModelError):
            constant_rate_failures(4, 1.5)


class TestBuildGroups:
    def test_interior_node_takes_all_neighbors(self):
        neighbors, centers = _grid_neighbors(20)
        groups = build_groups(neighbors, 8, centers)
        interior = 1 + 5 * 20 + 5
        assert sorted(groups[interior].members) == neighbors[interior]
        assert not groups[interior].clamped

    def test_corner_is_clamped(self, caplog):
        neighbors, centers = _grid_neighbors(20)
        groups = build_groups(neighbors, 8, centers)
        assert groups[1].size == 3
        assert groups[1].clamped
        assert 'clamped' in caplog.text

    def test_single_neighbor(self):
        neighbors, centers = _grid_neighbors(2)
        groups = build_groups(neighbors, 1, centers)
        assert groups[1].members == (2,)
        assert groups[1].partner == 2
        assert groups[4].members == (2,)

    def test_nearest_neighbors_first(self):
        neighbors, centers = _grid_neighbors(4)
        group = build_groups(neighbors, 4, centers)[6]
        assert group.members == (2, 5, 7, 10)
        assert group.partner == 2

    def test_invalid_level(self):
        neighbors, centers = _grid_neighbors(2)
        with pytest.raises(FaultModelError):
            build_groups(neighbors, 0, centers)


class TestLocalCommunication:
    def test_no_failures(self, rng):
        neighbors, centers = _grid_neighbors(2)
        groups = build_groups(neighbors, 1, centers)
        executed, events = local_comm_cycle(4, [], groups, rng)
        assert_array_equal(executed, np.arange(5))
        assert events == []

    def test_alternating_policy(self, rng):
        neighbors, centers = _grid_neighbors(2)
        groups = build_groups(neighbors, 1, centers)
        counters = {}
        sets = [local_comm_cycle(4, [3], groups, rng, 'alternate', counters)[0] for _ in range(4)]
        assert_array_equal(sets[0], [0, 1, 2, 4])
        assert_array_equal(sets[1], [0, 2, 3, 4])
        assert_array_equal(sets[2], sets[0])
        assert_array_equal(sets[3], sets[1])

    def test_counter_resets_when_node_recovers(self, rng):
        neighbors, centers = _grid_neighbors(2)
        groups = build_groups(neighbors, 1, centers)
        counters = {}
        local_comm_cycle(4, [3], groups, rng, 'alternate', counters)
        local_comm_cycle(4, [], groups, rng, 'alternate', counters)
        assert counters == {}

    def test_uniform_choice_within_group(self, rng):
        neighbors, centers = _grid_neighbors(3)
        groups = build_groups(neighbors, 3, centers)
        node = 5
        members = groups[node].members
        missing = {i: 0 for i in (node,) + members}
        cycles = 12_000
        for _ in range(cycles):
            executed, _ = local_comm_cycle(9, [node], groups, rng)
            for i in missing:
                if i not in executed:
                    missing[i] += 1
        for count in missing.values():
            assert abs(count / cycles - 0.25) < 0.02

    def test_conflict_first_claim_wins(self, rng):
        groups = {1: RedundancyGroup(1, (3,), 3, 1), 2: RedundancyGroup(2, (3,), 3, 1)}
        counters = {1: 1, 2: 1}
        executed, events = local_comm_cycle(4, [1, 2], groups, rng, 'alternate', counters)
        assert_array_equal(executed, [0, 1, 4])
        assert [(e.node, e.action, e.helper) for e in events] == [(1, 'reassigned', 3),
                                                                  (2, 'conflict', 3)]
        assert counters == {1: 2, 2: 2}

    def test_neighbor_down_and_group_down(self, rng):
        groups = {1: RedundancyGroup(1, (2, 3), 2, 2), 2: RedundancyGroup(2, (1,), 1, 1)}
        executed, events = local_comm_cycle(4, [1, 2], groups, rng, 'alternate', {1: 1})
        assert_array_equal(executed, [0, 3, 4])
        assert [e.action for e in events] == ['neighbor-down', 'group-down']

    def test_executed_size_identity(self):
        neighbors, centers = _grid_neighbors(6)
        groups = build_groups(neighbors, 2, centers)
        scenario = local_communication_scenario(36, groups, FAILURE, REPAIR, 60, seed=9)
        for m in range(60):
            executed = scenario.executed(m)
            assert 0 in executed
            assert executed.size == 37 - len(scenario.down[m])
            assert scenario.failures[m] == len(scenario.down[m])

    def test_unknown_policy(self, rng):
        with pytest.raises(FaultModelError):
            local_comm_cycle(4, [], {}, rng, 'round-robin')


class TestRateBounds:
    def test_single_part_recovers_uniform_rate(self):
        xi, factor = corollary_bound(PartitionRates([range(5)], [2]), kappa=4.0, lambda_max=2.0)
        assert xi == pytest.approx(0.5)
        assert factor == pytest.approx(1.0 - 0.4 / 4.0)

    def test_single_fault_at_failure_cycle(self):
        n, kappa = 10, 5.0
        rates = PartitionRates([[0], range(1, n + 1)], [1, n - 1])
        _, factor = corollary_bound(rates, kappa)
        assert factor == pytest.approx(1.0 - (n - 1) ** 2 / (n ** 2 * kappa))

    def test_failed_node_steady_state(self):
        l, kappa = 3, 6.0
        parts = [[0, 1, 2, 3]] + [[i] for i in range(4, 9)]
        _, factor = corollary_bound(PartitionRates(parts, [l] + [1] * 5), kappa)
        assert factor == pytest.approx(1.0 - (l / (l + 1)) ** 2 / kappa)

    @pytest.mark.parametrize("parts,executed", [
        ([[0, 1], [1, 2]], [1, 1]),
        ([[0, 2]], [1]),
        ([[0], []], [1, 0]),
        ([[0, 1]], [3]),
        ([[0, 1]], [1, 1]),
    ])
    def test_invalid_partition(self, parts, executed):
        with pytest.raises(FaultModelError):
            PartitionRates(parts, executed)

    def test_multi_fault_rates(self):
        assert multi_fault_rates(100, 2, 2, 0) == (1.0, 1.0)
        assert multi_fault_rates(100, 2, 2, 7) == (pytest.approx(0.93), 1.0)
        assert multi_fault_rates(100, 2, 4, 1)[0] == pytest.approx(2.0 / 3.0)

    def test_infeasible_geometry(self):
        with pytest.raises(FaultModelError):
            multi_fault_rates(10, 2, 6, 0)
        with pytest.raises(FaultModelError):
            multi_fault_rates(10, 2, 1, 0)


class TestFaultScenario:
    def test_text_round_trip_replays_index_sets(self, tmp_path):
        neighbors, centers = _grid_neighbors(4)
        groups = build_groups(neighbors, 2, centers)
        scenario = local_communication_scenario(16, groups, FAILURE, REPAIR, 40, seed=12)
        path = str(tmp_path / 'faults.txt')
        scenario.save(path)
        loaded = FaultScenario.load(path)
        original = ScenarioIndexSource(scenario)
        replay = ScenarioIndexSource(loaded)
        for m in range(40):
            assert_array_equal(original.index_set(m)[0], replay.index_set(m)[0])
            assert original.index_set(m)[1] == replay.index_set(m)[1]
        assert loaded.to_text() == scenario.to_text()

    def test_same_seed_same_text(self):
        first = master_slave_scenario(30, 20, seed=4, kind='uniform-interval', rate=0.1, delta_f=2)
        second = master_slave_scenario(30, 20, seed=4, kind='uniform-interval', rate=0.1, delta_f=2)
        assert first.to_text() == second.to_text()

    def test_cycle_beyond_horizon(self):
        scenario = master_slave_scenario(4, 3, seed=0)
        with pytest.raises(FaultModelError):
            scenario.executed(3)

    def test_truncated_text(self):
        text = master_slave_scenario(4, 3, seed=0).to_text()
        with pytest.raises(FaultModelError):
            FaultScenario.from_text(text.rsplit('cycle 2', 1)[0])

    def test_unknown_kind(self):
        with pytest.raises(FaultModelError):
            master_slave_scenario(4, 3, seed=0, kind='poisson')

    def test_rate_is_reported(self):
        scenario = master_slave_scenario(400, 4, seed=0, rate=0.2)
        assert scenario.target_rate == 0.2
        assert math.isclose(scenario.realized_rate, 81 / 401)
