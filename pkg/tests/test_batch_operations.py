"""Tests for batch execution of experiment jobs."""

import pytest

from schwarz_lab.core.batch_operations import ExperimentBatch
from schwarz_lab.core.cache_manager import SplittingCache
from schwarz_lab.core.config import ExperimentConfig
from schwarz_lab.core.database import ResultStore
from schwarz_lab.core.experiments import ExperimentJob, table1_jobs

SMALL = ExperimentConfig(n0=2, n1=8, layers=1, max_steps=200)


@pytest.fixture(scope="module")
def cache():
    return SplittingCache()


def _jobs(seeds=(0, 1, 2), **overrides):
    return [ExperimentJob(f"job{seed}", SMALL.with_overrides(seed=seed, **overrides),
                          'row', 'col', seed) for seed in seeds]


class TestDryRun:
    def test_valid_jobs(self, cache):
        results = ExperimentBatch(cache).dry_run(_jobs(fault_kind='constant-rate', fault_rate=0.2))
        assert all(r['valid'] for r in results)
        assert results[0]['estimated_cycles'] == 201

    def test_missing_trace(self, cache, tmp_path):
        jobs = _jobs([0], fault_kind='replay', trace=str(tmp_path / 'absent.txt'))
        result = ExperimentBatch(cache).dry_run(jobs)[0]
        assert not result['valid']
        assert 'trace' in result['errors'][0]

    def test_redundancy_warning(self, cache):
        result = ExperimentBatch(cache).dry_run(
            _jobs([0], fault_kind='local-communication', redundancy=9))[0]
        assert result['valid']
        assert result['warnings']

    def test_single_subdomain_local_communication(self, cache):
        cfg = ExperimentConfig(n0=1, n1=4, layers=1, fault_kind='local-communication')
        result = ExperimentBatch(cache).dry_run([ExperimentJob('one', cfg)])[0]
        assert not result['valid']

    def test_lower_bound_exceeds_subproblems(self, cache):
        jobs = _jobs([0], method='accelerated', p_policy='lower-bound', p_lower=9)
        assert not ExperimentBatch(cache).dry_run(jobs)[0]['valid']

    def test_duplicate_csv_paths(self, cache, tmp_path):
        jobs = _jobs([0, 1])
        for job in jobs:
            job.csv_path = str(tmp_path / 'same.csv')
        results = ExperimentBatch(cache).dry_run(jobs)
        assert results[0]['valid'] and not results[1]['valid']

    def test_table_jobs_are_valid(self, cache, tmp_path):
        jobs = table1_jobs(SMALL, [0], str(tmp_path))
        assert all(r['valid'] for r in ExperimentBatch(cache).dry_run(jobs))


class TestExecuteBatch:
    def test_sequential(self, cache):
        progress = []
        batch_runner = ExperimentBatch(cache)
        batch = batch_runner.execute_batch(_jobs(), lambda done, total, job: progress.append(
            (done, total, job.label)))
        summary = batch_runner.get_summary(batch)
        assert summary['completed'] == 3
        assert summary['failed'] == 0
        assert summary['converged'] == 3
        assert summary['status'] == 'completed'
        assert summary['progress'] == 100.0
        assert [p[0] for p in progress] == [1, 2, 3]

    def test_thread_pool_matches_sequential(self, cache):
        jobs = _jobs(fault_kind='constant-rate', fault_rate=0.2)
        sequential = ExperimentBatch(cache).execute_batch(jobs)
        rows = [job.report.rows() for job in sequential.jobs]
        parallel_jobs = _jobs(fault_kind='constant-rate', fault_rate=0.2)
        parallel = ExperimentBatch(cache, config={'max_workers': 3}).execute_batch(parallel_jobs)
        assert [job.report.rows() for job in parallel.jobs] == rows
        assert [job.label for job in parallel.completed_jobs] == ['job0', 'job1', 'job2']

    def test_failed_job_is_recorded(self, cache, tmp_path):
        jobs = _jobs([0]) + _jobs([1], fault_kind='replay', trace=str(tmp_path / 'absent.txt'))
        batch = ExperimentBatch(cache).execute_batch(jobs)
        assert [job.label for job in batch.failed_jobs] == ['job1']
        assert jobs[1].status == 'failed'
        assert 'absent.txt' in jobs[1].error
        assert batch.reports[1] is None

    def test_cancel_skips_pending_jobs(self, cache):
        batch_runner = ExperimentBatch(cache)
        batch = batch_runner.execute_batch(_jobs(), lambda done, total, job: batch_runner.cancel())
        assert batch.status == 'cancelled'
        assert len(batch.completed_jobs) == 1
        assert batch.jobs[2].status == 'pending'

    def test_runs_are_stored(self, cache, tmp_path):
        store = ResultStore(str(tmp_path / 'runs.db'))
        try:
            ExperimentBatch(cache, store, {'command': 'table1'}).execute_batch(_jobs([0, 1]))
            runs = store.get_runs()
            assert [r['command'] for r in runs] == ['table1:job0', 'table1:job1']
            assert store.get_steps(runs[0]['id'])
        finally:
            store.close()

    def test_empty_batch(self, cache):
        batch_runner = ExperimentBatch(cache)
        batch = batch_runner.execute_batch([])
        assert batch.get_progress() == 100.0
        assert batch_runner.get_summary(batch)['total_jobs'] == 0
