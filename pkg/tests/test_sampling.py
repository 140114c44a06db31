"""Tests for index set sampling."""

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from schwarz_lab.core.errors import ConfigError, FaultModelError
from schwarz_lab.core.sampling import (FixedIndexSource, RandomIndexSource, SamplerConfig,
                                       sample_index_set)

DRAWS = 40000


def _frequencies(sampler, n, p_m, rng, draws=DRAWS):
    counts = np.zeros(n + 1)
    for _ in range(draws):
        counts[np.unique(sample_index_set(sampler, n, p_m, rng))] += 1
    return counts / draws


class TestSampleIndexSet:
    def test_uniform_single_index(self, rng):
        freq = _frequencies(SamplerConfig('uniform'), 3, 1, rng)
        assert np.all(np.abs(freq - 0.25) < 0.01)

    def test_weighted_single_index(self, rng):
        sampler = SamplerConfig('weighted', probabilities=[0.7, 0.1, 0.1, 0.1])
        freq = _frequencies(sampler, 3, 1, rng)
        assert abs(freq[0] - 0.7) < 0.01

    def test_uniform_subset_is_sorted_and_distinct(self, rng):
        for _ in range(100):
            chosen = sample_index_set(SamplerConfig('uniform'), 9, 4, rng)
            assert chosen.size == 4
            assert np.all(np.diff(chosen) > 0)
            assert chosen.min() >= 0 and chosen.max() <= 9

    def test_full_set(self, rng):
        assert_array_equal(sample_index_set(SamplerConfig('uniform'), 3, 4, rng), [0, 1, 2, 3])

    def test_replacement_may_repeat(self, rng):
        sampler = SamplerConfig('weighted-replacement', probabilities=[0.97, 0.01, 0.01, 0.01])
        chosen = sample_index_set(sampler, 3, 6, rng)
        assert chosen.size == 6
        assert np.count_nonzero(chosen == 0) > 1

    @pytest.mark.parametrize("p_m", [0, 5])
    def test_subset_size_range(self, rng, p_m):
        with pytest.raises(FaultModelError):
            sample_index_set(SamplerConfig('uniform'), 3, p_m, rng)

    def test_probability_count(self, rng):
        sampler = SamplerConfig('weighted', probabilities=[0.5, 0.5])
        with pytest.raises(ConfigError):
            sample_index_set(sampler, 3, 1, rng)


class TestSamplerConfig:
    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            SamplerConfig('round-robin')

    def test_probabilities_required(self):
        with pytest.raises(ConfigError):
            SamplerConfig('weighted')

    def test_probabilities_sum_to_one(self):
        with pytest.raises(ConfigError):
            SamplerConfig('weighted', probabilities=[0.5, 0.4])

    def test_p_schedule(self):
        sampler = SamplerConfig(p=[1, 2, 3])
        assert [sampler.p_for_step(m, 8) for m in range(5)] == [1, 2, 3, 3, 3]
        assert SamplerConfig().p_for_step(0, 8) == 9
        assert SamplerConfig(p=4).p_for_step(7, 8) == 4


class TestIndexSources:
    def test_random_source_is_reproducible(self):
        source = RandomIndexSource(SamplerConfig(p=2), n=4, seed=5)
        again = RandomIndexSource(SamplerConfig(p=2), n=4, seed=5)
        for m in range(20):
            first, f_first = source.index_set(m)
            second, f_second = again.index_set(m)
            assert_array_equal(first, second)
            assert f_first == f_second == 3

    def test_random_source_depends_on_seed(self):
        a = RandomIndexSource(SamplerConfig(p=2), n=9, seed=1)
        b = RandomIndexSource(SamplerConfig(p=2), n=9, seed=2)
        assert any(not np.array_equal(a.index_set(m)[0], b.index_set(m)[0]) for m in range(20))

    def test_fixed_source(self):
        indices, failures = FixedIndexSource(4).index_set(3)
        assert_array_equal(indices, [0, 1, 2, 3, 4])
        assert failures == 0
        indices, failures = FixedIndexSource(4, [3, 0]).index_set(0)
        assert_array_equal(indices, [0, 3])
        assert failures == 3
