"""Tests for leave-one-subject-out experiments."""
import threading
from dataclasses import replace
from unittest.mock import patch

import numpy as np
import pytest

from gaitbench.client import BackendSpec, MockBackend, class_centroids, nearest_centroids
from gaitbench.domain import BinaryLabel, ClassLabel, Dataset, GeneratorConfig, generate_dataset
from gaitbench.exceptions import DatasetError
from gaitbench.experiments import (
    AccessLog,
    fold_rng,
    loso_split,
    run_knn_experiment,
    run_llm_experiment,
    run_ocsvm_experiment,
)
from gaitbench.metrics import compute_metrics
from gaitbench.preprocess import vectorize

SMALL_GRID = {'gamma_factors': (0.1, 1.0), 'nu_values': (0.3, 0.5)}


def nearest_centroid_oracle(dataset):
    """Out-of-fold nearest-centroid labels on the unrounded vectors, keyed by cycle."""
    predictions = {}
    for subject in dataset.subjects:
        centroids = class_centroids(dataset.without_subject(subject))
        for cycle in dataset.for_subjects([subject]):
            predictions[cycle.key] = nearest_centroids(centroids, vectorize(cycle))[0][0]
    return predictions


def test_default_plan(default_dataset):
    plan = loso_split(default_dataset)
    assert len(plan) == 20
    for fold in plan:
        assert len(default_dataset.for_subjects([fold.test_subject])) == 21
        assert len(fold.train_subjects) == 19
        assert fold.test_subject not in fold.train_subjects
    assert plan.fold_of('S07').fold_id == 6
    assert plan.digest() == loso_split(default_dataset).digest()


def test_single_subject_cannot_be_split():
    with pytest.raises(DatasetError):
        loso_split(generate_dataset(GeneratorConfig(n_subjects=1, cycles_per_class=1)))


def test_fold_rng_is_per_fold():
    assert fold_rng(42, 0).random() == fold_rng(42, 0).random()
    assert fold_rng(42, 0).random() != fold_rng(42, 1).random()
    assert fold_rng(-1, 0).random() == fold_rng(2 ** 64 - 1, 0).random()


def test_access_log_flags_training_reads_of_the_test_subject(small_dataset):
    plan = loso_split(small_dataset)
    access_log = AccessLog()
    access_log.record(0, 'test', ['S01'])
    access_log.record(1, 'knn', ['S01', 'S03'])
    assert access_log.leaks(plan) == []
    access_log.record(0, 'reference', ['S01'])
    assert access_log.leaks(plan) == [(0, 'reference', 'S01')]


@pytest.mark.parametrize('arm', ['knn', 'ocsvm', 'llm-grounded', 'llm'])
def test_no_arm_reads_the_test_subject_for_training(small_dataset, arm):
    access_log = AccessLog()
    if arm == 'knn':
        result = run_knn_experiment(small_dataset, access_log=access_log)
    elif arm == 'ocsvm':
        result = run_ocsvm_experiment(small_dataset, access_log=access_log, **SMALL_GRID)
    else:
        result = run_llm_experiment(
            small_dataset, MockBackend(), grounded=arm == 'llm-grounded', backoff_multiplier=0,
            access_log=access_log,
        )
    assert access_log.leaks(result.plan) == []
    reads = access_log.reads()
    for fold in result.plan:
        assert reads[(fold.fold_id, 'test')] == {fold.test_subject}
    if arm == 'llm-grounded':
        assert reads[(0, 'reference')] == set(result.plan.folds[0].train_subjects)
    assert len(result.predictions) == len(small_dataset)
    assert not result.fold_errors


def test_duplicated_subject_is_classified_perfectly_by_its_twin(small_dataset):
    twins = tuple(replace(cycle, subject_id='S99') for cycle in small_dataset.for_subjects(['S02']))
    dataset = Dataset(small_dataset.cycles + twins)
    result = run_knn_experiment(dataset, k=1)
    for record in result.predictions:
        if record.subject_id in ('S02', 'S99'):
            assert record.predicted == record.label


def test_parallel_folds_give_identical_records(small_dataset):
    serial = run_knn_experiment(small_dataset, k=3, jobs=1)
    parallel = run_knn_experiment(small_dataset, k=3, jobs=4)
    assert serial.predictions.records == parallel.predictions.records
    assert serial.predictions.metadata == parallel.predictions.metadata


def test_failing_folds_keep_their_records(small_dataset):
    result = run_knn_experiment(small_dataset, k=500)
    assert len(result.predictions) == len(small_dataset)
    assert all(record.failed for record in result.predictions)
    assert all(record.error.startswith('fold failed: ') for record in result.predictions)
    assert [error['fold_id'] for error in result.fold_errors] == [0, 1, 2, 3]
    diagnostics = result.diagnostics()
    assert diagnostics['n_failed'] == len(small_dataset)
    assert len(diagnostics['fold_errors']) == 4


def test_ocsvm_reports_tuning_per_fold(small_dataset):
    result = run_ocsvm_experiment(small_dataset, seed=3, **SMALL_GRID)
    assert [entry['fold_id'] for entry in result.tuning] == [0, 1, 2, 3]
    assert all(entry['nu'] in (0.3, 0.5) for entry in result.tuning)
    assert all(len(entry['cells']) == 4 for entry in result.tuning)
    assert {type(record.predicted) for record in result.predictions} == {BinaryLabel}
    assert result.predictions.metadata['arm'] == 'ocsvm'
    again = run_ocsvm_experiment(small_dataset, seed=3, **SMALL_GRID)
    assert again.predictions.records == result.predictions.records


def test_grounding_changes_prompts_only(small_dataset):
    grounded = run_llm_experiment(small_dataset, MockBackend(), grounded=True, backoff_multiplier=0)
    ungrounded = run_llm_experiment(small_dataset, MockBackend(), grounded=False, backoff_multiplier=0)
    assert [(r.key, r.fold_id) for r in grounded.predictions] == [(r.key, r.fold_id) for r in ungrounded.predictions]
    assert [v['prompt_sha256'] for v in grounded.verdicts] != [v['prompt_sha256'] for v in ungrounded.verdicts]
    assert grounded.predictions.metadata['template'] == 'prompt_grounded.txt'
    assert all(record.grounded for record in grounded.predictions)
    assert not any(record.grounded for record in ungrounded.predictions)


def test_persistent_faults_fail_single_trials(small_dataset):
    backend = MockBackend(fault='garbage', fault_fraction=0.3)
    spec = BackendSpec(max_retries=1, fault='garbage', fault_fraction=0.3)
    result = run_llm_experiment(small_dataset, backend, grounded=False, spec=spec, backoff_multiplier=0)
    failed = result.predictions.failed
    assert 0 < len(failed) < len(small_dataset)
    assert all(record.attempts == 2 for record in failed)
    assert all('No valid verdict after 2 attempts' in record.error for record in failed)
    diagnostics = result.diagnostics()
    assert diagnostics['n_failed'] == len(failed)
    assert diagnostics['attempts_histogram'] == {'1': len(small_dataset) - len(failed)}
    failed_entries = [entry for entry in result.verdicts if entry['verdict'] is None]
    assert len(failed_entries) == len(failed)
    assert all(entry['raw_response'].startswith('Based on the data') for entry in failed_entries)
    metrics = compute_metrics(result.predictions)
    assert metrics['n_scored'] == len(small_dataset) - len(failed)


def test_transient_faults_are_resubmitted(small_dataset):
    backend = MockBackend(fault='extra-field', fault_attempts=1)
    result = run_llm_experiment(small_dataset, backend, grounded=True, backoff_multiplier=0)
    assert not result.predictions.failed
    assert result.diagnostics()['attempts_histogram'] == {'2': len(small_dataset)}


class FakeClock:
    """Monotonic clock that moves half a second per reading."""

    def __init__(self):
        self.now = 0.0
        self.lock = threading.Lock()

    def __call__(self):
        with self.lock:
            self.now += 0.5
            return self.now


class SlowSlot:
    """In-flight limit where every acquisition waits 100 seconds of fake time."""

    def __init__(self, clock):
        self.clock = clock

    def __enter__(self):
        with self.clock.lock:
            self.clock.now += 100.0

    def __exit__(self, *exc_info):
        return False


def test_latency_excludes_waiting_for_a_slot(small_dataset):
    clock = FakeClock()
    with patch('gaitbench.experiments.time.monotonic', clock), \
            patch('gaitbench.experiments.threading.BoundedSemaphore', lambda value: SlowSlot(clock)):
        result = run_llm_experiment(
            small_dataset, MockBackend(), grounded=False, spec=BackendSpec(max_concurrent=1), backoff_multiplier=0,
        )
    latencies = [entry['latency_seconds'] for entry in result.verdicts]
    assert len(latencies) == len(small_dataset)
    assert max(latencies) < 100


def test_fence_faults_are_counted(small_dataset):
    result = run_llm_experiment(small_dataset, MockBackend(fault='fence'), grounded=False, backoff_multiplier=0)
    assert result.diagnostics()['fence_stripped'] == len(small_dataset)
    assert not result.predictions.failed


@pytest.mark.slow
def test_knn_on_default_cohort(default_dataset):
    result = run_knn_experiment(default_dataset, k=5, jobs=4)
    metrics = compute_metrics(result.predictions)
    assert metrics['n_records'] == 420
    assert metrics['multiclass']['mcc'] >= 0.95


@pytest.mark.slow
def test_ocsvm_on_default_cohort(default_dataset):
    result = run_ocsvm_experiment(default_dataset, jobs=4)
    assert compute_metrics(result.predictions)['binary']['mcc'] >= 0.5


@pytest.mark.slow
def test_ocsvm_without_class_effects():
    dataset = generate_dataset(GeneratorConfig(class_effect_scale=0.0))
    result = run_ocsvm_experiment(dataset, jobs=4)
    assert abs(compute_metrics(result.predictions)['binary']['mcc']) <= 0.15


@pytest.mark.slow
def test_mock_llm_matches_nearest_centroid_oracle(default_dataset):
    result = run_llm_experiment(default_dataset, MockBackend(), grounded=True, backoff_multiplier=0)
    oracle = nearest_centroid_oracle(default_dataset)
    assert len(result.predictions) == 420
    assert all(record.confidence is not None for record in result.predictions)
    agreement = np.mean([record.predicted == oracle[record.key] for record in result.predictions])
    assert agreement >= 0.99

    oracle_records = [replace(record, predicted=oracle[record.key]) for record in result.predictions]
    metrics = compute_metrics(result.predictions)
    oracle_metrics = compute_metrics(replace(result.predictions, records=tuple(oracle_records)))
    assert abs(metrics['multiclass']['mcc'] - oracle_metrics['multiclass']['mcc']) <= 0.02
    assert metrics['confidence'] is not None


@pytest.mark.slow
def test_arm_ordering_on_the_default_seed(default_dataset):
    assert GeneratorConfig().rng_seed == 42
    knn = compute_metrics(run_knn_experiment(default_dataset, jobs=4).predictions)['multiclass']['mcc']
    ocsvm = compute_metrics(run_ocsvm_experiment(default_dataset, seed=42, jobs=4).predictions)['binary']['mcc']
    llm = compute_metrics(
        run_llm_experiment(default_dataset, MockBackend(), grounded=True, backoff_multiplier=0).predictions,
    )['binary']['mcc']

    assert llm >= ocsvm, f'seed 42: mock llm binary MCC {llm:.4f} < ocsvm binary MCC {ocsvm:.4f}'
    assert knn >= ocsvm, f'seed 42: knn MCC {knn:.4f} < ocsvm binary MCC {ocsvm:.4f}'
    if not knn > llm:
        # The mock is a nearest-centroid classifier and can tie KNN on this cohort.
        pytest.xfail(f'seed 42: knn MCC {knn:.4f}, mock llm binary MCC {llm:.4f}, ocsvm binary MCC {ocsvm:.4f}')


def test_oracle_helper_covers_every_cycle(small_dataset):
    oracle = nearest_centroid_oracle(small_dataset)
    assert len(oracle) == len(small_dataset)
    assert set(oracle.values()) <= set(ClassLabel)
