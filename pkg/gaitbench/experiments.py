"""
Leave-one-subject-out experiments for the KNN, OCSVM and LLM arms.
"""

import json
import logging
import threading
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Set, Tuple

import numpy as np

from gaitbench.client import BackendSpec, ChatBackend, classify_trial
from gaitbench.domain import BinaryLabel, ClassLabel, Dataset, GaitCycle, project_binary
from gaitbench.encoding import build_reference_stats, encode_trial, render_reference
from gaitbench.exceptions import BackendError, DatasetError, GaitBenchException, VerdictRetriesExhausted
from gaitbench.helpers import sha256_text
from gaitbench.knn import fit_knn, knn_predict_many
from gaitbench.predictions import PredictionRecord, PredictionSet, merge_records
from gaitbench.preprocess import fit_standardizer, vectorize_many
from gaitbench.prompts import assemble_prompt, load_template
from gaitbench.tuning import DEFAULT_GAMMA_FACTORS, DEFAULT_NU_VALUES, default_tuning_grid, tune_ocsvm

logger = logging.getLogger(__name__)

TEST_PURPOSE = 'test'


@dataclass(frozen=True)
class Fold:
    fold_id: int
    test_subject: str
    train_subjects: Tuple[str, ...]


@dataclass(frozen=True)
class FoldPlan:
    """One fold per subject, ordered by subject id."""

    folds: Tuple[Fold, ...]

    def __len__(self) -> int:
        """Number of folds."""
        return len(self.folds)

    def __iter__(self):
        """Iterate over folds."""
        return iter(self.folds)

    def fold_of(self, subject_id: str) -> Fold:
        """The fold that tests a subject."""
        for fold in self.folds:
            if fold.test_subject == subject_id:
                return fold
        raise KeyError(subject_id)

    def digest(self) -> str:
        """SHA-256 of the plan, recorded with predictions."""
        return sha256_text(json.dumps([[fold.test_subject, list(fold.train_subjects)] for fold in self.folds]))


def loso_split(dataset: Dataset) -> FoldPlan:
    """
    Leave-one-subject-out plan.

    :raises DatasetError: with fewer than two subjects.
    """
    subjects = dataset.subjects
    if len(subjects) < 2:
        raise DatasetError(f'Leave-one-subject-out needs at least 2 subjects, got {len(subjects)}')
    return FoldPlan(tuple(
        Fold(fold_id, subject, tuple(other for other in subjects if other != subject))
        for fold_id, subject in enumerate(subjects)
    ))


class AccessLog:
    """Thread-safe record of which subjects each fold read, and for what."""

    def __init__(self) -> None:
        """Start empty."""
        self._reads: Dict[Tuple[int, str], Set[str]] = {}
        self._lock = threading.Lock()

    def record(self, fold_id: int, purpose: str, subjects: Iterable[str]) -> None:
        """Remember a read."""
        with self._lock:
            self._reads.setdefault((fold_id, purpose), set()).update(subjects)

    def reads(self) -> Dict[Tuple[int, str], Set[str]]:
        """Copy of every (fold, purpose) -> subjects entry."""
        with self._lock:
            return {key: set(value) for key, value in self._reads.items()}

    def leaks(self, plan: FoldPlan) -> List[Tuple[int, str, str]]:
        """(fold, purpose, subject) for every training-side read of a fold's test subject."""
        found = []
        for (fold_id, purpose), subjects in sorted(self.reads().items()):
            if purpose == TEST_PURPOSE:
                continue
            test_subject = plan.folds[fold_id].test_subject
            if test_subject in subjects:
                found.append((fold_id, purpose, test_subject))
        return found


class DatasetView:
    """Dataset access that goes through an AccessLog."""

    def __init__(self, dataset: Dataset, access_log: Optional[AccessLog] = None) -> None:
        """Wrap a dataset."""
        self.dataset = dataset
        self.access_log = access_log or AccessLog()

    def training(self, fold: Fold, purpose: str) -> Dataset:
        """Cycles of the fold's training subjects."""
        selected = self.dataset.for_subjects(fold.train_subjects)
        self.access_log.record(fold.fold_id, purpose, selected.subjects)
        return selected

    def test(self, fold: Fold) -> Dataset:
        """Cycles of the fold's held-out subject."""
        selected = self.dataset.for_subjects([fold.test_subject])
        self.access_log.record(fold.fold_id, TEST_PURPOSE, selected.subjects)
        return selected


@dataclass
class ExperimentResult:
    """Predictions plus everything the results bundle reports next to them."""

    predictions: PredictionSet
    plan: FoldPlan
    tuning: List[Dict[str, Any]] = field(default_factory=list)
    verdicts: List[Dict[str, Any]] = field(default_factory=list)
    fold_errors: List[Dict[str, Any]] = field(default_factory=list)

    def diagnostics(self) -> Dict[str, Any]:
        """Failures, fence-stripped answers and attempt counts."""
        failed = self.predictions.failed
        attempts = Counter(
            str(record.attempts) for record in self.predictions.successful if record.attempts is not None
        )
        return {
            'n_records': len(self.predictions),
            'n_scored': len(self.predictions.successful),
            'n_failed': len(failed),
            'failed_records': [
                {
                    'subject_id': record.subject_id,
                    'label': record.label.value,
                    'cycle_index': record.cycle_index,
                    'fold_id': record.fold_id,
                    'attempts': record.attempts,
                    'error': record.error,
                }
                for record in failed
            ],
            'fold_errors': list(self.fold_errors),
            'fence_stripped': sum(1 for verdict in self.verdicts if verdict.get('fence_stripped')),
            'attempts_histogram': dict(sorted(attempts.items(), key=lambda item: int(item[0]))),
            'degenerate_tuning_folds': [entry['fold_id'] for entry in self.tuning if entry.get('degenerate_folds')],
        }


FoldRunner = Callable[[Fold], Tuple[List[PredictionRecord], Dict[str, Any]]]


def _failed_records(fold: Fold, test: Dataset, model_id: str, error: str, **extra: Any) -> List[PredictionRecord]:
    return [
        PredictionRecord(
            cycle.subject_id, cycle.label, cycle.cycle_index, None, fold.fold_id, model_id, error=error, **extra,
        )
        for cycle in test
    ]


def _run_folds(
    dataset: Dataset, plan: FoldPlan, runner: FoldRunner, jobs: int, model_id: str, metadata: Dict[str, Any],
) -> ExperimentResult:
    """Run every fold, at most ``jobs`` at a time; a fold that raises yields failed records."""
    def guarded(fold: Fold) -> Tuple[List[PredictionRecord], Dict[str, Any], Optional[Dict[str, Any]]]:
        logger.info('Fold %d: testing subject %s', fold.fold_id, fold.test_subject)
        try:
            records, extra = runner(fold)
            return records, extra, None
        except GaitBenchException as exc:
            logger.error('Fold %d (subject %s) failed: %s', fold.fold_id, fold.test_subject, exc)
            test = dataset.for_subjects([fold.test_subject])
            error = {'fold_id': fold.fold_id, 'test_subject': fold.test_subject, 'error': str(exc)}
            return _failed_records(fold, test, model_id, f'fold failed: {exc}'), {}, error

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as executor:
        outcomes = list(executor.map(guarded, plan.folds))

    result = ExperimentResult(
        predictions=merge_records(
            (records for records, _, _ in outcomes),
            {**metadata, 'fold_plan_sha256': plan.digest()},
        ),
        plan=plan,
    )
    for _, extra, error in outcomes:
        result.tuning.extend(extra.get('tuning', []))
        result.verdicts.extend(extra.get('verdicts', []))
        if error is not None:
            result.fold_errors.append(error)
    result.verdicts.sort(key=lambda entry: (entry['subject_id'], ClassLabel.parse(entry['label']).order,
                                            entry['cycle_index']))
    return result


def run_knn_experiment(
    dataset: Dataset,
    k: int = 5,
    standardize: bool = False,
    jobs: int = 1,
    access_log: Optional[AccessLog] = None,
) -> ExperimentResult:
    """Per fold: store the training vectors, predict every test cycle by k-nearest neighbors."""
    plan = loso_split(dataset)
    view = DatasetView(dataset, access_log)
    model_id = f'knn-k{k}'

    def run_fold(fold: Fold) -> Tuple[List[PredictionRecord], Dict[str, Any]]:
        train = view.training(fold, 'knn')
        test = view.test(fold)
        model = fit_knn(vectorize_many(train), [cycle.label for cycle in train], k=k, standardize=standardize)
        predictions = knn_predict_many(model, vectorize_many(test))
        return [
            PredictionRecord(cycle.subject_id, cycle.label, cycle.cycle_index, predicted, fold.fold_id, model_id)
            for cycle, predicted in zip(test, predictions)
        ], {}

    metadata = {'arm': 'knn', 'classifier': model_id, 'k': k, 'standardize': standardize}
    return _run_folds(dataset, plan, run_fold, jobs, model_id, metadata)


def fold_rng(seed: int, fold_id: int) -> np.random.Generator:
    """Independent generator per fold, derived from the run seed."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed % 2 ** 64, fold_id])))


def run_ocsvm_experiment(
    dataset: Dataset,
    gamma_factors: Iterable[float] = DEFAULT_GAMMA_FACTORS,
    nu_values: Iterable[float] = DEFAULT_NU_VALUES,
    tuning_folds: int = 3,
    standardize: bool = True,
    seed: int = 42,
    jobs: int = 1,
    solver_options: Optional[Dict[str, Any]] = None,
    access_log: Optional[AccessLog] = None,
) -> ExperimentResult:
    """
    Per fold: tune (gamma, nu) on the training subjects, retrain on their NORMAL cycles and
    predict NORMAL / NOT_NORMAL for every test cycle.

    Standardizers are fitted on training NORMAL vectors only: one per inner tuning fold and
    one for the final model. Gamma factors are scaled by the pooled variance of all training
    vectors under the final standardizer.
    """
    plan = loso_split(dataset)
    view = DatasetView(dataset, access_log)
    gamma_factors = tuple(gamma_factors)
    nu_values = tuple(nu_values)
    solver_options = dict(solver_options or {})
    model_id = 'ocsvm-rbf'

    def run_fold(fold: Fold) -> Tuple[List[PredictionRecord], Dict[str, Any]]:
        train = view.training(fold, 'ocsvm')
        test = view.test(fold)
        vectors = vectorize_many(train)
        labels = [project_binary(cycle.label) for cycle in train]
        scale_vectors = vectors
        if standardize:
            normal = vectors[[index for index, label in enumerate(labels) if label == BinaryLabel.NORMAL]]
            scale_vectors = fit_standardizer(normal).apply(vectors)

        grid = default_tuning_grid(scale_vectors, gamma_factors, nu_values, tuning_folds)
        tuned = tune_ocsvm(
            vectors, labels, grid, fold_rng(seed, fold.fold_id), standardize=standardize, **solver_options,
        )
        predictions = tuned.predict_many(vectorize_many(test))
        records = [
            PredictionRecord(cycle.subject_id, cycle.label, cycle.cycle_index, predicted, fold.fold_id, model_id)
            for cycle, predicted in zip(test, predictions)
        ]
        tuning = {'fold_id': fold.fold_id, 'test_subject': fold.test_subject, **tuned.to_dict()}
        return records, {'tuning': [tuning]}

    metadata = {'arm': 'ocsvm', 'classifier': model_id, 'standardize': standardize, 'seed': seed}
    result = _run_folds(dataset, plan, run_fold, jobs, model_id, metadata)
    result.tuning.sort(key=lambda entry: entry['fold_id'])
    return result


def _verdict_entry(cycle: GaitCycle, fold: Fold, prompt: str, latency: float, **fields: Any) -> Dict[str, Any]:
    return {
        'subject_id': cycle.subject_id,
        'label': cycle.label.value,
        'cycle_index': cycle.cycle_index,
        'fold_id': fold.fold_id,
        'prompt_sha256': sha256_text(prompt),
        'latency_seconds': round(latency, 3),
        **fields,
    }


def run_llm_experiment(
    dataset: Dataset,
    backend: ChatBackend,
    grounded: bool,
    spec: Optional[BackendSpec] = None,
    jobs: int = 1,
    backoff_multiplier: float = 1.0,
    backoff_max: float = 30.0,
    access_log: Optional[AccessLog] = None,
) -> ExperimentResult:
    """
    Per fold: when grounded, build NORMAL reference statistics without the test subject; then
    encode and classify every test cycle independently.

    Trials whose classification fails terminally are kept as failed records.
    """
    spec = spec or BackendSpec()
    plan = loso_split(dataset)
    view = DatasetView(dataset, access_log)
    template = load_template(grounded)
    model_id = backend.model_id or spec.resolved_model_id
    in_flight = threading.BoundedSemaphore(spec.max_concurrent)

    def classify(fold: Fold, fold_backend: ChatBackend, reference_text: Optional[str], cycle: GaitCycle):
        prompt = assemble_prompt(encode_trial(cycle), reference_text, template)
        with in_flight:
            started = time.monotonic()
            try:
                verdict = classify_trial(
                    fold_backend, prompt, spec.max_retries,
                    backoff_multiplier=backoff_multiplier, backoff_max=backoff_max,
                )
            except VerdictRetriesExhausted as exc:
                logger.error('Trial %s/%s/%d failed: %s', cycle.subject_id, cycle.label.value, cycle.cycle_index, exc)
                record = PredictionRecord(
                    cycle.subject_id, cycle.label, cycle.cycle_index, None, fold.fold_id, model_id,
                    grounded=grounded, attempts=exc.attempts, error=str(exc),
                )
                entry = _verdict_entry(
                    cycle, fold, prompt, time.monotonic() - started,
                    raw_response=exc.raw_response, verdict=None, attempts=exc.attempts, error=str(exc),
                )
                return record, entry
            except BackendError as exc:
                logger.error('Trial %s/%s/%d failed: %s', cycle.subject_id, cycle.label.value, cycle.cycle_index, exc)
                record = PredictionRecord(
                    cycle.subject_id, cycle.label, cycle.cycle_index, None, fold.fold_id, model_id,
                    grounded=grounded, error=str(exc),
                )
                entry = _verdict_entry(
                    cycle, fold, prompt, time.monotonic() - started,
                    raw_response=None, verdict=None, attempts=None, error=str(exc),
                )
                return record, entry
            latency = time.monotonic() - started

        record = PredictionRecord(
            cycle.subject_id, cycle.label, cycle.cycle_index, verdict.predicted, fold.fold_id, model_id,
            grounded=grounded, confidence=verdict.confidence, justification=verdict.justification,
            attempts=verdict.attempts,
        )
        entry = _verdict_entry(
            cycle, fold, prompt, latency,
            raw_response=verdict.raw_response,
            verdict={
                'class': verdict.predicted.value,
                'confidence': verdict.confidence.value,
                'justification': verdict.justification,
            },
            attempts=verdict.attempts,
            fence_stripped=verdict.fence_stripped,
            error=None,
        )
        return record, entry

    def run_fold(fold: Fold) -> Tuple[List[PredictionRecord], Dict[str, Any]]:
        fold_backend = backend.bind_fold(view.training(fold, 'backend'))
        reference_text = None
        if grounded:
            stats = build_reference_stats(view.training(fold, 'reference'), fold.test_subject)
            reference_text = render_reference(stats)
        test = view.test(fold)
        with ThreadPoolExecutor(max_workers=spec.max_concurrent) as executor:
            outcomes = list(executor.map(lambda cycle: classify(fold, fold_backend, reference_text, cycle), test))
        return [record for record, _ in outcomes], {'verdicts': [entry for _, entry in outcomes]}

    metadata = {
        'arm': 'llm',
        'classifier': model_id,
        'backend': spec.kind,
        'grounded': grounded,
        'template': template.name,
        'template_sha256': template.sha256,
        'max_retries': spec.max_retries,
    }
    return _run_folds(dataset, plan, run_fold, jobs, model_id, metadata)

