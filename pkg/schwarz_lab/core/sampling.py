"""
Random selection of the subproblems solved in each iteration cycle.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from ..utils.rng import derive_rng
from .errors import ConfigError, FaultModelError

logger = logging.getLogger(__name__)

SAMPLER_MODES = ('uniform', 'weighted', 'weighted-replacement', 'external')


@dataclass
class SamplerConfig:
    """
    How index sets I_m are drawn.

    Modes:
        uniform: size-p_m subset, every index equally likely
        weighted: p_m successive draws without replacement proportional to q
        weighted-replacement: p_m independent draws from q (multiset)
        external: index sets are supplied by a fault scenario
    """

    mode: str = 'uniform'
    p: Union[int, Sequence[int], None] = None
    probabilities: Optional[Sequence[float]] = None

    def __post_init__(self):
        if self.mode not in SAMPLER_MODES:
            raise ConfigError(f"unknown sampler mode '{self.mode}'")
        if self.mode in ('weighted', 'weighted-replacement'):
            if self.probabilities is None:
                raise ConfigError(f"sampler mode '{self.mode}' needs probabilities")
            q = np.asarray(self.probabilities, dtype=float)
            if np.any(q <= 0.0) or abs(q.sum() - 1.0) > 1e-9:
                raise ConfigError("probabilities must be positive and sum to 1")

    def p_for_step(self, m: int, n: int) -> int:
        """Subset size p_m; the last entry of a schedule repeats, None means n+1."""
        if self.p is None:
            return n + 1
        if isinstance(self.p, (int, np.integer)):
            return int(self.p)
        schedule = list(self.p)
        if not schedule:
            return n + 1
        return int(schedule[min(m, len(schedule) - 1)])


def sample_index_set(sampler: SamplerConfig, n: int, p_m: int,
                     rng: np.random.Generator) -> np.ndarray:
    """
    Draw the index set I_m from {0, ..., n}.

    Args:
        sampler: Sampling mode and probabilities
        n: Number of subdomains (indices 0..n, 0 is the coarse space)
        p_m: Number of draws
        rng: Generator for this step

    Returns:
        Sorted index array; may contain repeats in weighted-replacement mode

    Raises:
        FaultModelError: If p_m is outside 1..n+1
    """
    total = n + 1
    if sampler.mode == 'weighted-replacement':
        if p_m < 1:
            raise FaultModelError(f"p_m must be >= 1, got {p_m}")
    elif not 1 <= p_m <= total:
        raise FaultModelError(f"p_m must lie in 1..{total}, got {p_m}")

    if sampler.mode == 'uniform':
        if p_m == total:
            return np.arange(total, dtype=np.int64)
        chosen = rng.choice(total, size=p_m, replace=False)
    elif sampler.mode == 'weighted':
        q = np.asarray(sampler.probabilities, dtype=float)
        if q.size != total:
            raise ConfigError(f"expected {total} probabilities, got {q.size}")
        chosen = rng.choice(total, size=p_m, replace=False, p=q)
    elif sampler.mode == 'weighted-replacement':
        q = np.asarray(sampler.probabilities, dtype=float)
        if q.size != total:
            raise ConfigError(f"expected {total} probabilities, got {q.size}")
        chosen = rng.choice(total, size=p_m, replace=True, p=q)
    else:
        raise ConfigError("external index sets are supplied by a fault scenario")
    return np.sort(np.asarray(chosen, dtype=np.int64))


class IndexSource:
    """Supplies (I_m, f_m) for every cycle m of a run."""

    name = 'source'

    def index_set(self, m: int) -> Tuple[np.ndarray, int]:
        raise NotImplementedError

    def describe(self) -> dict:
        return {'source': self.name}


@dataclass
class RandomIndexSource(IndexSource):
    """Index sets drawn by a sampler from a stream keyed by (seed, m)."""

    sampler: SamplerConfig
    n: int
    seed: int = 0
    name: str = field(default='random', init=False)

    def index_set(self, m: int) -> Tuple[np.ndarray, int]:
        p_m = self.sampler.p_for_step(m, self.n)
        rng = derive_rng(self.seed, 'index-set', m)
        indices = sample_index_set(self.sampler, self.n, p_m, rng)
        f_m = self.n + 1 - np.unique(indices).size
        return indices, f_m

    def describe(self) -> dict:
        return {'source': self.name, 'mode': self.sampler.mode, 'p': self.sampler.p}


@dataclass
class FixedIndexSource(IndexSource):
    """The same index set in every cycle (full set by default)."""

    n: int
    indices: Optional[Sequence[int]] = None
    name: str = field(default='fixed', init=False)

    def index_set(self, m: int) -> Tuple[np.ndarray, int]:
        if self.indices is None:
            return np.arange(self.n + 1, dtype=np.int64), 0
        chosen = np.sort(np.asarray(self.indices, dtype=np.int64))
        return chosen, self.n + 1 - np.unique(chosen).size
