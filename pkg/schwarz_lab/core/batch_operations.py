"""
Batch execution of experiment jobs with dry-run validation.
Runs table cells and repeats sequentially or on a thread pool.
"""

import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional

from .cache_manager import SplittingCache
from .database import ResultStore
from .errors import SchwarzLabError
from .experiments import ExperimentJob, run_experiment

logger = logging.getLogger(__name__)


class BatchRun:
    """Represents one execution of a list of jobs."""

    def __init__(self, jobs: List[ExperimentJob]):
        self.jobs = jobs
        self.status = 'pending'
        self.start_time = None
        self.end_time = None
        self.completed_jobs: List[ExperimentJob] = []
        self.failed_jobs: List[ExperimentJob] = []

    def get_progress(self) -> float:
        """Get overall progress as percentage."""
        if not self.jobs:
            return 100.0
        done = len(self.completed_jobs) + len(self.failed_jobs)
        return (done / len(self.jobs)) * 100

    def get_eta(self) -> float:
        """Get estimated time to completion."""
        done = len(self.completed_jobs) + len(self.failed_jobs)
        if not self.start_time or not done:
            return 0.0
        elapsed = time.time() - self.start_time
        return elapsed / done * (len(self.jobs) - done)

    @property
    def reports(self):
        """Reports of the finished jobs in job order (None for failed jobs)."""
        return [job.report for job in self.jobs]


class ExperimentBatch:
    """Batch runner with dry-run, progress callbacks and cancellation."""

    def __init__(self, cache: Optional[SplittingCache] = None,
                 store: Optional[ResultStore] = None, config: Optional[dict] = None):
        """
        Initialize batch runner.

        Args:
            cache: Splitting cache shared by all jobs
            store: Optional result store; every finished run is recorded
            config: Configuration dictionary ('max_workers', 'command')
        """
        config = config or {}
        self.cache = cache or SplittingCache(config)
        self.store = store
        self.max_workers = max(1, int(config.get('max_workers', 1)))
        self.command = config.get('command', 'batch')
        self._cancel_flag = False
        self._pause_flag = False
        self._lock = threading.Lock()

    def dry_run(self, jobs: List[ExperimentJob]) -> List[dict]:
        """
        Validate jobs without solving anything.

        Args:
            jobs: Jobs to check

        Returns:
            List of dry run results
        """
        results = []
        seen_paths = set()
        for job in jobs:
            cfg = job.config
            result = {
                'label': job.label,
                'valid': True,
                'warnings': [],
                'errors': [],
                'estimated_cycles': cfg.max_steps + 1,
            }
            n = cfg.n0 * cfg.n0

            if cfg.fault_kind == 'replay' and not os.path.exists(cfg.trace):
                result['valid'] = False
                result['errors'].append(f"fault trace not found: {cfg.trace}")
            if cfg.fault_kind == 'local-communication':
                if n < 2:
                    result['valid'] = False
                    result['errors'].append('local communication needs at least two subdomains')
                elif cfg.redundancy > 8:
                    result['warnings'].append(
                        f"redundancy level {cfg.redundancy} exceeds the 8 possible neighbors")
            if cfg.sampler_p > n + 1:
                result['warnings'].append(f"sampler p={cfg.sampler_p} exceeds n+1={n + 1}")
            if cfg.method == 'accelerated' and cfg.p_policy == 'lower-bound' \
                    and cfg.p_lower > n + 1:
                result['valid'] = False
                result['errors'].append(f"p_lower={cfg.p_lower} exceeds n+1={n + 1}")

            if job.csv_path:
                if job.csv_path in seen_paths:
                    result['valid'] = False
                    result['errors'].append('another job writes the same CSV')
                elif os.path.exists(job.csv_path):
                    result['warnings'].append('CSV already exists and will be overwritten')
                seen_paths.add(job.csv_path)

            results.append(result)
        return results

    def execute_batch(self, jobs: List[ExperimentJob],
                      progress_callback: Callable = None) -> BatchRun:
        """
        Execute jobs, concurrently when max_workers > 1.

        Args:
            jobs: Jobs to run
            progress_callback: Optional callback(finished, total, job)

        Returns:
            BatchRun; jobs keep their input order whatever the completion order
        """
        batch = BatchRun(jobs)
        batch.status = 'running'
        batch.start_time = time.time()
        self._cancel_flag = False
        finished = [0]

        def work(job: ExperimentJob) -> None:
            while self._pause_flag and not self._cancel_flag:
                time.sleep(0.1)
            if self._cancel_flag:
                return
            self._execute_job(job)
            with self._lock:
                if job.status == 'completed':
                    batch.completed_jobs.append(job)
                else:
                    batch.failed_jobs.append(job)
                finished[0] += 1
                count = finished[0]
            if progress_callback:
                progress_callback(count, len(jobs), job)

        if self.max_workers > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
                list(pool.map(work, jobs))
        else:
            for job in jobs:
                if self._cancel_flag:
                    break
                work(job)

        batch.end_time = time.time()
        batch.completed_jobs.sort(key=jobs.index)
        batch.failed_jobs.sort(key=jobs.index)
        if self._cancel_flag:
            batch.status = 'cancelled'
        elif batch.status == 'running':
            batch.status = 'completed'
        return batch

    def _execute_job(self, job: ExperimentJob) -> None:
        job.status = 'running'
        try:
            result = run_experiment(job.config, self.cache, job.csv_path)
            job.report = result.report
            if self.store is not None:
                self.store.add_run(result.report, f"{self.command}:{job.label}", result.config_hash)
            job.status = 'completed'
        except SchwarzLabError as e:
            job.status = 'failed'
            job.error = str(e)
            logger.error("Job %s failed: %s", job.label, e)

    def cancel(self) -> None:
        """Cancel ongoing batch; running jobs finish, pending jobs are skipped."""
        self._cancel_flag = True

    def pause(self) -> None:
        """Pause before the next job starts."""
        self._pause_flag = True

    def resume(self) -> None:
        """Resume paused batch."""
        self._pause_flag = False

    def get_summary(self, batch: BatchRun) -> dict:
        """
        Get summary of batch run.

        Args:
            batch: BatchRun instance

        Returns:
            Summary dictionary
        """
        converged = sum(1 for job in batch.completed_jobs if job.report.converged)
        return {
            'total_jobs': len(batch.jobs),
            'completed': len(batch.completed_jobs),
            'failed': len(batch.failed_jobs),
            'converged': converged,
            'progress': batch.get_progress(),
            'status': batch.status,
            'duration': batch.end_time - batch.start_time if batch.end_time else 0,
        }
