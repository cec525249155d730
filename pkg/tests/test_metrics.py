"""Tests for confusion matrices, MCC, macro-F1 and confidence strata."""
import math
from itertools import product

import numpy as np
import pytest
from ddt import data, ddt
from django.test import SimpleTestCase

from gaitbench.domain import BinaryLabel, ClassLabel, Confidence, project_binary
from gaitbench.exceptions import MetricError
from gaitbench.metrics import (
    ConfusionMatrix,
    compute_metrics,
    confusion,
    macro_f1,
    mcc,
    multiclass_mcc,
    per_class_f1,
    percent,
    stratify_by_confidence,
)
from gaitbench.predictions import PredictionRecord, PredictionSet

BINARY = tuple(BinaryLabel)
CLASSES = tuple(ClassLabel)


def binary_matrix(tp, fn, fp, tn):
    return ConfusionMatrix(BINARY, np.array([[tp, fn], [fp, tn]], dtype=np.int64))


def record(label, predicted, index=0, subject='S01', confidence=None, model_id='test'):
    return PredictionRecord(
        subject_id=subject, label=label, cycle_index=index, predicted=predicted, fold_id=0,
        model_id=model_id, confidence=confidence,
    )


def brute_force_mcc(pairs, labels):
    """Pearson correlation of one-hot truth and prediction indicators over all classes."""
    truth = np.array([[float(actual == label) for label in labels] for actual, _ in pairs])
    guess = np.array([[float(predicted == label) for label in labels] for _, predicted in pairs])
    truth -= truth.mean(axis=0)
    guess -= guess.mean(axis=0)
    covariance = (truth * guess).sum()
    scale = math.sqrt((truth * truth).sum() * (guess * guess).sum())
    return 0.0 if scale == 0 else covariance / scale


def test_binary_closed_form():
    assert mcc(binary_matrix(tp=3, fn=2, fp=1, tn=4)) == pytest.approx(10 / math.sqrt(600), abs=1e-12)


def test_multiclass_form_agrees_on_two_classes():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        counts = rng.integers(0, 50, size=(2, 2))
        if counts.sum() == 0:
            continue
        cm = ConfusionMatrix(BINARY, counts)
        assert abs(mcc(cm) - multiclass_mcc(cm)) <= 1e-12


def test_multiclass_matches_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(50):
        pairs = [(CLASSES[rng.integers(7)], CLASSES[rng.integers(7)]) for _ in range(60)]
        records = [record(actual, predicted, index) for index, (actual, predicted) in enumerate(pairs)]
        assert mcc(confusion(records)) == pytest.approx(brute_force_mcc(pairs, CLASSES), abs=1e-12)


@ddt
class TestDegenerateMatrices(SimpleTestCase):
    """Perfect and constant predictors."""

    @data(2, 7)
    def test_perfect_diagonal(self, size):
        labels = BINARY if size == 2 else CLASSES
        cm = ConfusionMatrix(labels, np.diag(np.arange(1, size + 1)))
        assert mcc(cm) == 1.0
        assert macro_f1(cm) == 1.0

    @data(2, 7)
    def test_single_predicted_class(self, size):
        labels = BINARY if size == 2 else CLASSES
        counts = np.zeros((size, size), dtype=np.int64)
        counts[:, 0] = 5
        assert mcc(ConfusionMatrix(labels, counts)) == 0.0

    def test_empty_matrix(self):
        with self.assertRaises(MetricError):
            mcc(ConfusionMatrix(BINARY, np.zeros((2, 2), dtype=np.int64)))


def test_f1_skips_absent_classes():
    records = [
        record(ClassLabel.NORMAL, ClassLabel.NORMAL, 0),
        record(ClassLabel.NORMAL, ClassLabel.STIFF, 1),
        record(ClassLabel.STIFF, ClassLabel.STIFF, 2),
    ]
    scores = per_class_f1(confusion(records))
    assert scores[ClassLabel.NORMAL] == pytest.approx(2 / 3)
    assert scores[ClassLabel.STIFF] == pytest.approx(2 / 3)
    assert scores[ClassLabel.BOUNCY] is None
    assert macro_f1(confusion(records)) == pytest.approx(2 / 3)


def test_collapse_commutes_with_projection():
    rng = np.random.default_rng(5)
    pairs = [(CLASSES[rng.integers(7)], CLASSES[rng.integers(7)]) for _ in range(200)]
    records = [record(actual, predicted, index) for index, (actual, predicted) in enumerate(pairs)]
    collapsed = confusion(records).collapse(project_binary, BINARY)
    projected = confusion(records, BinaryLabel)
    assert collapsed.counts.tolist() == projected.counts.tolist()


def test_to_binary_keeps_every_record():
    records = [
        record(ClassLabel.NORMAL, ClassLabel.NORMAL, 0),
        record(ClassLabel.BOUNCY, ClassLabel.NORMAL, 1),
        record(ClassLabel.STIFF, ClassLabel.CROUCHED, 2, confidence=Confidence.LOW),
        record(ClassLabel.CROUCHED, None, 3),
    ]
    predictions = PredictionSet(tuple(records), {'arm': 'llm'})
    binary = predictions.to_binary()
    assert len(binary) == len(predictions)
    assert binary.metadata == {'arm': 'llm'}
    assert [item.predicted for item in binary] == [
        BinaryLabel.NORMAL, BinaryLabel.NORMAL, BinaryLabel.NOT_NORMAL, None,
    ]
    assert [item.label for item in binary] == [item.label for item in predictions]
    assert binary.records[2].confidence == Confidence.LOW
    assert len(binary.failed) == 1
    assert binary.is_binary


def test_with_confidence_keeps_successful_records_of_one_level():
    records = confident_set([Confidence.HIGH, Confidence.LOW, Confidence.HIGH])
    records.append(record(ClassLabel.STIFF, None, 99, subject='S09', confidence=Confidence.HIGH))
    predictions = PredictionSet(tuple(records))
    assert len(predictions.with_confidence(Confidence.HIGH)) == 2
    assert len(predictions.with_confidence(Confidence.MEDIUM)) == 0


def test_failed_records_are_not_counted():
    records = [record(ClassLabel.NORMAL, ClassLabel.NORMAL, 0), record(ClassLabel.BOUNCY, None, 1)]
    assert confusion(records).total == 1


def test_prediction_outside_the_space():
    with pytest.raises(MetricError):
        confusion([record(ClassLabel.NORMAL, BinaryLabel.NORMAL)], ClassLabel)


@pytest.mark.parametrize('part, whole, expected', [
    (1, 420, '0.24'),
    (323, 420, '76.90'),
    (1, 8, '12.50'),
    (0, 5, '0.00'),
    (5, 5, '100.00'),
])
def test_percent(part, whole, expected):
    assert percent(part, whole) == expected


def confident_set(levels):
    records = []
    for index, (level, (subject, label)) in enumerate(zip(levels, product(['S01', 'S02', 'S03'], CLASSES * 20))):
        records.append(record(label, label, index, subject=subject, confidence=level))
    return records


def test_single_low_confidence_record_of_420():
    levels = [Confidence.LOW] + [Confidence.HIGH] * 322 + [Confidence.MEDIUM] * 97
    strata = stratify_by_confidence(confident_set(levels))
    assert strata[Confidence.LOW].n == 1
    assert strata[Confidence.LOW].sample_percent == '0.24'
    assert strata[Confidence.LOW].insufficient
    assert strata[Confidence.LOW].mcc is None
    assert strata[Confidence.HIGH].sample_percent == '76.67'
    assert strata[Confidence.HIGH].mcc == 1.0


def test_strata_need_confidence():
    with pytest.raises(MetricError):
        stratify_by_confidence([record(ClassLabel.NORMAL, ClassLabel.NORMAL)])


def test_compute_metrics_for_multiclass_run():
    levels = [Confidence.HIGH] * 10 + [Confidence.MEDIUM] * 3
    records = confident_set(levels) + [record(ClassLabel.STIFF, None, 999, subject='S09')]
    metrics = compute_metrics(PredictionSet(tuple(records)))
    assert (metrics['n_records'], metrics['n_scored'], metrics['n_failed']) == (14, 13, 1)
    assert metrics['multiclass']['mcc'] == 1.0
    assert metrics['binary']['n'] == 13
    assert metrics['confidence']['medium']['insufficient']
    assert metrics['confidence']['high']['macro_f1'] == 1.0


def test_compute_metrics_for_binary_run():
    records = [
        record(ClassLabel.NORMAL, BinaryLabel.NORMAL, 0),
        record(ClassLabel.BOUNCY, BinaryLabel.NOT_NORMAL, 1),
        record(ClassLabel.STIFF, BinaryLabel.NORMAL, 2),
    ]
    metrics = compute_metrics(PredictionSet(tuple(records)))
    assert metrics['multiclass'] is None
    assert metrics['confidence'] is None
    assert metrics['binary']['mcc'] == pytest.approx(0.5)


def test_compute_metrics_without_scored_records():
    metrics = compute_metrics(PredictionSet((record(ClassLabel.NORMAL, None),)))
    assert metrics['n_failed'] == 1
    assert metrics['binary'] is None
