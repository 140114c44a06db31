"""
Main entry point for Schwarz Lab.
"""

import argparse
import logging
import os
import sys

from .core.batch_operations import ExperimentBatch
from .core.cache_manager import SplittingCache
from .core.config import ExperimentConfig, load_experiment
from .core.cost_model import compare_architectures, compare_redundancy_strategies, load_constants
from .core.database import ResultStore
from .core.errors import ConfigError, SchwarzLabError
from .core.experiments import (TABLE2_MAX_STEPS, collect_table, format_table, run_experiment,
                               spectrum_report, table1_jobs, table2_jobs, write_summary,
                               write_table_csv)
from .core.fem import GridSpec
from .core.splitting import build_splitting
from .core.verification import run_all

logger = logging.getLogger(__name__)

COMMANDS = ('spectrum', 'run', 'table1', 'table2', 'cost', 'verify')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='schwarz-lab',
        description='Stochastic Schwarz iterations with fault injection')
    parser.add_argument('command', choices=COMMANDS)
    parser.add_argument('--config', metavar='PATH', help='experiment configuration file')
    parser.add_argument('--seed', type=int, help='master seed (overrides the file)')
    parser.add_argument('--out', metavar='DIR', help='output directory (overrides the file)')
    parser.add_argument('--repeats', type=int, default=1,
                        help='realizations per table cell (mean +- sd when > 1)')
    parser.add_argument('--constants', metavar='PATH', help='cost constants file for "cost"')
    parser.add_argument('--trajectories', type=int, default=2000,
                        help='Monte Carlo runs for "verify"')
    parser.add_argument('--verbose', '-v', action='store_true', help='debug logging')
    return parser


def setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
        stream=sys.stderr,
    )


def _open_store(cfg: ExperimentConfig):
    return ResultStore(cfg.database) if cfg.database else None


def cmd_spectrum(cfg: ExperimentConfig, cache: SplittingCache) -> int:
    bounds, summary = spectrum_report(cfg, cache)
    path = write_summary(os.path.join(cfg.output_dir, 'spectrum.txt'), summary,
                         cfg.config_hash(), cfg.seed)
    for key, value in summary.items():
        print(f"{key}: {value}")
    logger.info("Wrote %s", path)
    return 0


def cmd_run(cfg: ExperimentConfig, cache: SplittingCache) -> int:
    csv_path = os.path.join(cfg.output_dir, 'run.csv')
    trace_path = os.path.join(cfg.output_dir, 'faults.txt')
    result = run_experiment(cfg, cache, csv_path, trace_path)
    store = _open_store(cfg)
    if store is not None:
        try:
            store.add_run(result.report, 'run', result.config_hash)
        finally:
            store.close()
    for key, value in result.report.get_summary().items():
        print(f"{key}: {value}")
    return 0 if result.report.converged else 1


def cmd_table(cfg: ExperimentConfig, cache: SplittingCache, name: str, repeats: int) -> int:
    seeds = [cfg.seed + r for r in range(max(1, repeats))]
    make_jobs = table1_jobs if name == 'table1' else table2_jobs
    jobs = make_jobs(cfg, seeds, cfg.output_dir)

    store = _open_store(cfg)
    batch_runner = ExperimentBatch(cache, store, {'max_workers': cfg.max_workers, 'command': name})
    invalid = [r for r in batch_runner.dry_run(jobs) if not r['valid']]
    if invalid:
        for r in invalid:
            logger.error("Job %s is invalid: %s", r['label'], '; '.join(r['errors']))
        return 1

    def progress(done, total, job):
        logger.info("[%d/%d] %s: %s", done, total, job.label,
                    job.report.reason if job.report else job.error)

    try:
        batch = batch_runner.execute_batch(jobs, progress)
    finally:
        if store is not None:
            store.close()

    rows, columns, cells = collect_table(jobs)
    cap = TABLE2_MAX_STEPS if name == 'table2' else cfg.max_steps
    print(format_table(rows, columns, cells, cap))
    path = write_table_csv(os.path.join(cfg.output_dir, f"{name}.csv"), rows, columns, cells,
                           cfg.config_hash(), cfg.seed)
    logger.info("Wrote %s", path)
    summary = batch_runner.get_summary(batch)
    logger.info("%d jobs completed, %d failed", summary['completed'], summary['failed'])
    return 0 if summary['failed'] == 0 else 1


def cmd_cost(constants_path: str) -> int:
    if not constants_path:
        raise ConfigError("the cost command needs --constants PATH")
    constants = load_constants(constants_path)
    times = compare_architectures(constants)
    width = max(len(k) for k in times)
    for architecture, value in times.items():
        print(f"{architecture:<{width}}  {value:.6g}")
    strategies = compare_redundancy_strategies(constants)
    print(f"redundancy {strategies['redundancy']:.6g} vs double-solve "
          f"{strategies['double-solve']:.6g}: {strategies['cheaper']} is cheaper")
    return 0


def cmd_verify(cfg: ExperimentConfig, trajectories: int) -> int:
    splitting = build_splitting(GridSpec(n1=8, n0=2), 1)
    results = run_all(splitting, cfg.seed, trajectories)
    for result in results:
        print(result.line())
    return 0 if all(r.passed for r in results) else 1


def main(argv=None) -> int:
    """Main application entry point."""
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)

    try:
        cfg = load_experiment(args.config).with_overrides(seed=args.seed, output_dir=args.out)
        cache = SplittingCache({'cache_entries': cfg.cache_entries})

        if args.command == 'spectrum':
            return cmd_spectrum(cfg, cache)
        if args.command == 'run':
            return cmd_run(cfg, cache)
        if args.command in ('table1', 'table2'):
            return cmd_table(cfg, cache, args.command, args.repeats)
        if args.command == 'cost':
            return cmd_cost(args.constants)
        return cmd_verify(cfg, args.trajectories)
    except ConfigError as e:
        logger.error("Configuration error: %s", e)
        return 2
    except SchwarzLabError as e:
        logger.error("%s", e)
        return 1


if __name__ == '__main__':
    sys.exit(main())
