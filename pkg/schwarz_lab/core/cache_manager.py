"""
LRU cache of built splittings.
Table commands and verification reuse factorizations across runs.
"""

import logging
import threading
from collections import OrderedDict
from typing import Dict, Optional, Tuple

from .fem import GridSpec, assemble_poisson
from .splitting import Splitting, WeightSpec, build_splitting

logger = logging.getLogger(__name__)


class SplittingCache:
    """Keeps the most recently used splittings up to a fixed count."""

    def __init__(self, config: Optional[dict] = None):
        """
        Initialize cache manager.

        Args:
            config: Configuration dictionary ('cache_entries')
        """
        config = config or {}
        self.max_entries = max(1, int(config.get('cache_entries', 4)))
        self._entries: 'OrderedDict[Tuple, Splitting]' = OrderedDict()
        self._lock = threading.Lock()
        self._build_locks: Dict[Tuple, threading.Lock] = {}
        self.hits = 0
        self.misses = 0
        self.evictions = 0

    @staticmethod
    def _key(grid: GridSpec, layers: int, weights: WeightSpec, coefficient: float,
             rhs: float) -> Tuple:
        if isinstance(weights, (int, float)):
            w = float(weights)
        else:
            w = tuple(float(v) for v in weights)
        return (grid.n0, grid.n1, int(layers), w, float(coefficient), float(rhs))

    def get_or_build(self, grid: GridSpec, layers: int, weights: WeightSpec = 1.0,
                     coefficient: float = 1.0, rhs: float = 1.0) -> Splitting:
        """
        Return the cached splitting for (grid, layers, weights), building it on a miss.

        Args:
            grid: Fine/coarse grid
            layers: Overlap layers
            weights: Weight specification
            coefficient: Constant diffusion coefficient a
            rhs: Constant right-hand side f

        Returns:
            Splitting
        """
        key = self._key(grid, layers, weights, coefficient, rhs)
        with self._lock:
            if key in self._entries:
                return self._hit(key)
            build_lock = self._build_locks.setdefault(key, threading.Lock())

        # Builds of different keys run concurrently; a key is built once
        with build_lock:
            with self._lock:
                if key in self._entries:
                    return self._hit(key)
                self.misses += 1
            try:
                problem = assemble_poisson(grid, a=coefficient, f=rhs)
                splitting = build_splitting(grid, layers, weights, problem)
            except BaseException:
                with self._lock:
                    self._build_locks.pop(key, None)
                raise
            with self._lock:
                self._entries[key] = splitting
                self._build_locks.pop(key, None)
                while len(self._entries) > self.max_entries:
                    evicted, _ = self._entries.popitem(last=False)
                    self.evictions += 1
                    logger.debug("Evicted splitting %s", evicted)
            return splitting

    def _hit(self, key: Tuple) -> Splitting:
        self._entries.move_to_end(key)
        self.hits += 1
        return self._entries[key]

    def clear_cache(self) -> None:
        """Clear entire cache."""
        with self._lock:
            self._entries.clear()

    def get_cache_stats(self) -> dict:
        """
        Get cache statistics.

        Returns:
            Dictionary with cache statistics
        """
        with self._lock:
            return {
                'entries': len(self._entries),
                'max_entries': self.max_entries,
                'hits': self.hits,
                'misses': self.misses,
                'evictions': self.evictions,
                'keys': list(self._entries),
            }
