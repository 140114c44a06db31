"""
Experiment assembly: turns an ExperimentConfig into a splitting, an index
source and run settings, and lays out the table reproductions.
"""

import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..utils.csvio import write_csv
from .cache_manager import SplittingCache
from .config import ExperimentConfig
from .errors import ConfigError
from .faults import (FaultScenario, ScenarioIndexSource, WeibullParams, build_groups,
                     constant_rate_failures, local_communication_scenario,
                     master_slave_scenario, weibull_master_slave_scenario)
from .fem import GridSpec
from .iteration import RunReport, RunSettings, run
from .sampling import FixedIndexSource, IndexSource, RandomIndexSource, SamplerConfig
from .spectral import SpectralBounds, estimate_spectral_bounds
from .splitting import Splitting

logger = logging.getLogger(__name__)

TABLE1_RATES = (0.0, 0.04, 0.08, 0.12, 0.16, 0.2)
TABLE1_ROWS = (
    ('steepest-descent', {'method': 'one-step', 'relaxation': 'steepest-descent'}),
    ('xi=0.4', {'method': 'one-step', 'relaxation': '0.4'}),
    ('accelerated', {'method': 'accelerated', 'lambda_upper': 3.33, 'lambda_lower': 0.9}),
)

TABLE1_TOLERANCE = 1e-6

TABLE2_SCENARIOS = ((18.0, 3.0), (38.0, 7.0), (70.0, 1.0), (600.0, 20.0))
TABLE2_LEVELS = tuple(range(1, 9))
TABLE2_TOLERANCE = 1e-8
TABLE2_MAX_STEPS = 100


@dataclass
class ExperimentJob:
    """One run of a table or batch: a configuration plus its table position."""

    label: str
    config: ExperimentConfig
    row: str = ''
    column: str = ''
    seed: int = 0
    csv_path: Optional[str] = None
    status: str = 'pending'
    error: Optional[str] = None
    report: Optional[RunReport] = None


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    report: RunReport
    splitting: Splitting
    scenario: Optional[FaultScenario] = None
    config_hash: str = ''
    csv_path: Optional[str] = None


def grid_of(cfg: ExperimentConfig) -> GridSpec:
    return GridSpec(n1=cfg.n1, n0=cfg.n0)


def get_splitting(cfg: ExperimentConfig, cache: Optional[SplittingCache] = None) -> Splitting:
    """Splitting of a configuration, from the cache when one is given."""
    cache = cache or SplittingCache({'cache_entries': 1})
    return cache.get_or_build(grid_of(cfg), cfg.layers, cfg.weights, cfg.coefficient, cfg.rhs)


def build_index_source(cfg: ExperimentConfig, splitting: Splitting,
                       seed: int) -> Tuple[IndexSource, Optional[FaultScenario]]:
    """
    Index source of a run: sampler without faults, otherwise a generated
    or replayed fault scenario covering cycles 0..max_steps.
    """
    n = splitting.n
    horizon = cfg.max_steps + 1
    kind = cfg.fault_kind

    if kind == 'none':
        if cfg.sampler_p <= 0 or cfg.sampler_p >= n + 1:
            return FixedIndexSource(n), None
        sampler = SamplerConfig(mode=cfg.sampler_mode, p=cfg.sampler_p,
                                probabilities=None if cfg.sampler_mode == 'uniform'
                                else np.full(n + 1, 1.0 / (n + 1)))
        return RandomIndexSource(sampler, n, seed), None

    arrival = WeibullParams(cfg.k1, cfg.lambda1)
    repair = WeibullParams(cfg.k2, cfg.lambda2)
    if kind in ('constant-rate', 'uniform-interval'):
        scenario = master_slave_scenario(n, horizon, seed, kind, cfg.fault_rate, cfg.delta_f)
    elif kind == 'weibull-master-slave':
        scenario = weibull_master_slave_scenario(n, arrival, repair, horizon, seed)
    elif kind == 'local-communication':
        centers = {i: splitting.subdomain_center(i) for i in range(1, n + 1)}
        groups = build_groups(splitting.neighbors, cfg.redundancy, centers)
        scenario = local_communication_scenario(n, groups, arrival, repair, horizon, seed,
                                                cfg.group_policy)
    elif kind == 'replay':
        scenario = FaultScenario.load(cfg.trace)
        if scenario.n != n:
            raise ConfigError(f"trace was recorded for n={scenario.n}, splitting has n={n}")
        if scenario.horizon < horizon:
            raise ConfigError(f"trace covers {scenario.horizon} cycles, run needs {horizon}")
    else:
        raise ConfigError(f"unknown fault kind '{kind}'")
    return ScenarioIndexSource(scenario), scenario


def p_lower_bound(cfg: ExperimentConfig, n: int) -> int:
    """Safe lower bound for |I_m| used by the accelerated method."""
    if cfg.p_lower > 0:
        return cfg.p_lower
    if cfg.fault_kind in ('constant-rate', 'uniform-interval'):
        f_star = constant_rate_failures(n, cfg.fault_rate)
        delta = cfg.delta_f if cfg.fault_kind == 'uniform-interval' else 0
        return max(1, n + 1 - min(n + 1, f_star + delta))
    return n + 1


def run_settings(cfg: ExperimentConfig, n: int) -> RunSettings:
    p_lower = p_lower_bound(cfg, n) if cfg.p_policy == 'lower-bound' else None
    return RunSettings(
        method=cfg.method,
        relaxation=cfg.relaxation_value,
        tolerance=cfg.tolerance,
        max_steps=cfg.max_steps,
        lambda_upper=cfg.lambda_upper,
        lambda_lower=cfg.lambda_lower,
        p_policy=cfg.p_policy,
        p_lower=p_lower,
        refresh_interval=cfg.refresh_interval,
        max_workers=cfg.max_workers,
    )


def run_experiment(cfg: ExperimentConfig, cache: Optional[SplittingCache] = None,
                   csv_path: Optional[str] = None, trace_path: Optional[str] = None) -> ExperimentResult:
    """
    Execute one configured run.

    Args:
        cfg: Experiment configuration (cfg.seed drives all randomness)
        cache: Optional splitting cache
        csv_path: Where to write the step CSV
        trace_path: Where to write the fault scenario, if any

    Returns:
        ExperimentResult
    """
    splitting = get_splitting(cfg, cache)
    source, scenario = build_index_source(cfg, splitting, cfg.seed)
    settings = run_settings(cfg, splitting.n)
    config_hash = cfg.config_hash()
    report = run(splitting, source, settings, seed=cfg.seed, config=cfg.echo())

    if not report.converged:
        logger.warning("Run did not converge within %d steps", cfg.max_steps)
    if csv_path:
        report.to_csv(csv_path, config_hash)
    if trace_path and scenario is not None:
        scenario.save(trace_path)
    return ExperimentResult(cfg, report, splitting, scenario, config_hash, csv_path)


def spectrum_report(cfg: ExperimentConfig, cache: Optional[SplittingCache] = None) -> Tuple[SpectralBounds, Dict]:
    """Spectral estimate and splitting summary of a configuration."""
    splitting = get_splitting(cfg, cache)
    bounds = estimate_spectral_bounds(splitting, cfg.spectrum_iterations, cfg.seed)
    summary = dict(splitting.summary())
    summary.update(bounds.to_dict())
    return bounds, summary


def write_summary(path: str, summary: Dict, config_hash: str, seed: int) -> str:
    """Write a 'key: value' summary with provenance comment."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    lines = [f"# config_hash={config_hash}, seed={seed}"]
    for key, value in summary.items():
        lines.append(f"{key}: {format(value, '.17g') if isinstance(value, float) else value}")
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write('\n'.join(lines) + '\n')
    return path


def _rate_label(rate: float) -> str:
    return f"rf={rate:g}"


def table1_jobs(base: ExperimentConfig, seeds: Sequence[int], out_dir: Optional[str] = None) -> List[ExperimentJob]:
    """Jobs for the method x failure-rate table (master-slave, constant rate)."""
    jobs = []
    for row, overrides in TABLE1_ROWS:
        for rate in TABLE1_RATES:
            for seed in seeds:
                cfg = base.with_overrides(fault_kind='constant-rate', fault_rate=rate,
                                          tolerance=TABLE1_TOLERANCE,
                                          seed=seed, **overrides)
                label = f"{row}_{_rate_label(rate)}_seed{seed}"
                path = os.path.join(out_dir, 'table1', f"{label}.csv") if out_dir else None
                jobs.append(ExperimentJob(label, cfg, row, _rate_label(rate), seed, path))
    return jobs


def table2_jobs(base: ExperimentConfig, seeds: Sequence[int], out_dir: Optional[str] = None) -> List[ExperimentJob]:
    """Jobs for the redundancy-level table (local communication, Weibull faults) plus baseline."""
    jobs = []
    common = dict(method='one-step', relaxation='steepest-descent',
                  tolerance=TABLE2_TOLERANCE, max_steps=TABLE2_MAX_STEPS, k1=0.5, k2=1.0)
    for seed in seeds:
        cfg = base.with_overrides(fault_kind='none', seed=seed, **common)
        label = f"baseline_seed{seed}"
        path = os.path.join(out_dir, 'table2', f"{label}.csv") if out_dir else None
        jobs.append(ExperimentJob(label, cfg, 'no-fault', 'baseline', seed, path))
    for lambda1, lambda2 in TABLE2_SCENARIOS:
        row = f"lambda1={lambda1:g},lambda2={lambda2:g}"
        for level in TABLE2_LEVELS:
            for seed in seeds:
                cfg = base.with_overrides(fault_kind='local-communication', lambda1=lambda1,
                                          lambda2=lambda2, redundancy=level, seed=seed, **common)
                label = f"w{lambda1:g}-{lambda2:g}_l{level}_seed{seed}"
                path = os.path.join(out_dir, 'table2', f"{label}.csv") if out_dir else None
                jobs.append(ExperimentJob(label, cfg, row, f"l={level}", seed, path))
    return jobs


@dataclass
class TableCell:
    counts: List[int] = field(default_factory=list)
    capped: int = 0

    @property
    def mean(self) -> float:
        return float(np.mean(self.counts)) if self.counts else math.nan

    @property
    def sd(self) -> float:
        return float(np.std(self.counts, ddof=1)) if len(self.counts) > 1 else 0.0

    def text(self, cap: Optional[int] = None) -> str:
        if not self.counts:
            return 'failed'
        if len(self.counts) == 1:
            value = self.counts[0]
            return f">{cap}" if self.capped and cap is not None else str(value)
        return f"{self.mean:.1f}+-{self.sd:.1f}"


def collect_table(jobs: Sequence[ExperimentJob]) -> Tuple[List[str], List[str], Dict[Tuple[str, str], TableCell]]:
    """Group finished jobs into (rows, columns, cells) keeping first-seen order."""
    rows, columns = [], []
    cells: Dict[Tuple[str, str], TableCell] = {}
    for job in jobs:
        if job.row not in rows:
            rows.append(job.row)
        if job.column not in columns:
            columns.append(job.column)
        cell = cells.setdefault((job.row, job.column), TableCell())
        if job.report is not None:
            cell.counts.append(job.report.iterations)
            if not job.report.converged:
                cell.capped += 1
    return rows, columns, cells


def format_table(rows: Sequence[str], columns: Sequence[str],
                 cells: Dict[Tuple[str, str], TableCell], cap: Optional[int] = None) -> str:
    """Fixed-width text table for the terminal."""
    width = max([len(r) for r in rows] + [8])
    header = ' ' * width + ''.join(f"{c:>12}" for c in columns)
    lines = [header]
    for row in rows:
        texts = [cells[(row, c)].text(cap) if (row, c) in cells else '' for c in columns]
        lines.append(f"{row:<{width}}" + ''.join(f"{t:>12}" for t in texts))
    return '\n'.join(lines)


def write_table_csv(path: str, rows: Sequence[str], columns: Sequence[str],
                    cells: Dict[Tuple[str, str], TableCell], config_hash: str, seed: int) -> str:
    """Long-format CSV of a table: one line per cell."""
    data = []
    for row in rows:
        for column in columns:
            cell = cells.get((row, column))
            if cell is None:
                continue
            data.append((row, column, len(cell.counts), cell.mean, cell.sd, cell.capped))
    return write_csv(path, ('row', 'column', 'runs', 'mean_iterations', 'sd_iterations', 'capped'),
                     data, {'config_hash': config_hash, 'seed': seed})
