"""
Confusion matrices, Matthews correlation, macro-F1 and confidence stratification.
"""

import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from fractions import Fraction
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Type

import numpy as np

from gaitbench.domain import BinaryLabel, ClassLabel, Confidence, project_binary
from gaitbench.exceptions import MetricError
from gaitbench.predictions import PredictionRecord, PredictionSet


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with rows = truth and columns = prediction."""

    labels: Tuple[Enum, ...]
    counts: np.ndarray

    @property
    def total(self) -> int:
        """Number of scored records."""
        return int(self.counts.sum())

    def row_sums(self) -> List[int]:
        """Per-class truth counts."""
        return [int(value) for value in self.counts.sum(axis=1)]

    def column_sums(self) -> List[int]:
        """Per-class prediction counts."""
        return [int(value) for value in self.counts.sum(axis=0)]

    def collapse(self, mapping: Callable[[Enum], Enum], labels: Sequence[Enum]) -> 'ConfusionMatrix':
        """Sum rows and columns that map onto the same target label."""
        index = {label: position for position, label in enumerate(labels)}
        counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
        for row, truth in enumerate(self.labels):
            for column, predicted in enumerate(self.labels):
                counts[index[mapping(truth)], index[mapping(predicted)]] += self.counts[row, column]
        return ConfusionMatrix(tuple(labels), counts)

    def to_rows(self) -> List[List[str]]:
        """CSV rows: a header of labels, then one row per truth label."""
        rows = [['truth\\predicted'] + [label.value for label in self.labels]]
        for label, counts in zip(self.labels, self.counts):
            rows.append([label.value] + [str(int(value)) for value in counts])
        return rows


def _as_label(value: Enum, label_space: Type[Enum]) -> Enum:
    if isinstance(value, label_space):
        return value
    if label_space is BinaryLabel and isinstance(value, ClassLabel):
        return project_binary(value)
    raise MetricError(f'Label {value!r} is not in the {label_space.__name__} space')


def confusion(records: Iterable[PredictionRecord], label_space: Type[Enum] = ClassLabel) -> ConfusionMatrix:
    """
    Count (truth, prediction) pairs of the successful records.

    With ``BinaryLabel`` as the space, seven-class truths and predictions are projected first.

    :raises MetricError: for a prediction outside the label space.
    """
    labels = tuple(label_space)
    index = {label: position for position, label in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for record in records:
        if record.failed:
            continue
        truth = _as_label(record.label, label_space)
        predicted = _as_label(record.predicted, label_space)
        counts[index[truth], index[predicted]] += 1
    return ConfusionMatrix(labels, counts)


def _require_counts(cm: ConfusionMatrix) -> List[List[int]]:
    if cm.total == 0:
        raise MetricError('Cannot score an empty confusion matrix')
    return [[int(value) for value in row] for row in cm.counts]


def mcc(cm: ConfusionMatrix) -> float:
    """
    Matthews correlation coefficient.

    Two classes use the TP/FP/FN/TN closed form, more use the covariance form. Any zero
    factor in the denominator gives 0.
    """
    counts = _require_counts(cm)
    if len(counts) == 2:
        tp, fn = counts[0]
        fp, tn = counts[1]
        denominator = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
        if denominator == 0:
            return 0.0
        return (tp * tn - fp * fn) / math.sqrt(denominator)
    return multiclass_mcc(cm)


def multiclass_mcc(cm: ConfusionMatrix) -> float:
    """(c s - sum p_k t_k) / sqrt((s^2 - sum p_k^2)(s^2 - sum t_k^2))."""
    counts = _require_counts(cm)
    size = len(counts)
    total = sum(sum(row) for row in counts)
    correct = sum(counts[k][k] for k in range(size))
    predicted = [sum(counts[row][k] for row in range(size)) for k in range(size)]
    true = [sum(counts[k]) for k in range(size)]
    numerator = correct * total - sum(p * t for p, t in zip(predicted, true))
    denominator = (total ** 2 - sum(p * p for p in predicted)) * (total ** 2 - sum(t * t for t in true))
    if denominator == 0:
        return 0.0
    return numerator / math.sqrt(denominator)


def per_class_f1(cm: ConfusionMatrix) -> Dict[Enum, Optional[float]]:
    """F1 per label; None for labels absent from both truth and prediction."""
    counts = _require_counts(cm)
    scores: Dict[Enum, Optional[float]] = {}
    for k, label in enumerate(cm.labels):
        true_positive = counts[k][k]
        predicted = sum(row[k] for row in counts)
        actual = sum(counts[k])
        if predicted == 0 and actual == 0:
            scores[label] = None
            continue
        precision = true_positive / predicted if predicted else 0.0
        recall = true_positive / actual if actual else 0.0
        scores[label] = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return scores


def macro_f1(cm: ConfusionMatrix) -> float:
    """Unweighted mean of per-class F1 over the labels that occur in truth or prediction."""
    scores = [score for score in per_class_f1(cm).values() if score is not None]
    return sum(scores) / len(scores)


def percent(part: int, whole: int) -> str:
    """Exact share rendered at two decimals, half-up: 1 of 420 -> '0.24'."""
    share = Fraction(100 * part, whole)
    value = Decimal(share.numerator) / Decimal(share.denominator)
    return str(value.quantize(Decimal('0.01'), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class ConfidenceStratum:
    """Scores of the records that share one self-rated confidence level."""

    confidence: Confidence
    n: int
    total: int
    macro_f1: Optional[float]
    mcc: Optional[float]
    insufficient: bool

    @property
    def sample_percent(self) -> str:
        """Share of all scored records, e.g. '76.90'."""
        return percent(self.n, self.total)

    def to_dict(self) -> dict:
        """JSON-friendly mapping."""
        return {
            'n': self.n,
            'sample_fraction': self.n / self.total,
            'sample_percent': self.sample_percent,
            'macro_f1': self.macro_f1,
            'mcc': self.mcc,
            'insufficient': self.insufficient,
        }


def stratify_by_confidence(
    records: Iterable[PredictionRecord], min_samples: int = 5,
) -> Dict[Confidence, ConfidenceStratum]:
    """
    Multiclass macro-F1 and MCC per confidence level, over successful records.

    Levels with fewer than ``min_samples`` records keep n and share but no metrics.

    :raises MetricError: when a successful record has no confidence or there is nothing to score.
    """
    scored = [record for record in records if not record.failed]
    if not scored:
        raise MetricError('No successful records to stratify')
    for record in scored:
        if record.confidence is None:
            raise MetricError(f'Record {record.subject_id}/{record.label.value}/{record.cycle_index} has no confidence')

    strata = {}
    for level in Confidence:
        subset = [record for record in scored if record.confidence == level]
        insufficient = len(subset) < min_samples
        cm = None if insufficient else confusion(subset, ClassLabel)
        strata[level] = ConfidenceStratum(
            confidence=level,
            n=len(subset),
            total=len(scored),
            macro_f1=None if cm is None else macro_f1(cm),
            mcc=None if cm is None else mcc(cm),
            insufficient=insufficient,
        )
    return strata


def summarize(cm: ConfusionMatrix) -> Dict[str, Any]:
    """n, MCC, macro-F1 and per-class F1 of one matrix."""
    return {
        'n': cm.total,
        'mcc': mcc(cm),
        'macro_f1': macro_f1(cm),
        'per_class_f1': {label.value: score for label, score in per_class_f1(cm).items()},
    }


def compute_metrics(predictions: PredictionSet, min_samples: int = 5) -> Dict[str, Any]:
    """
    Everything metrics.json reports for one run.

    Binary classifiers get no multiclass section; runs without confidence ratings get no
    confidence section. Failed records are counted but never scored.
    """
    scored = predictions.successful
    result: Dict[str, Any] = {
        'n_records': len(predictions),
        'n_scored': len(scored),
        'n_failed': len(predictions.failed),
        'multiclass': None,
        'binary': None,
        'confidence': None,
    }
    if not scored:
        return result
    if not predictions.is_binary:
        result['multiclass'] = summarize(confusion(scored, ClassLabel))
    result['binary'] = summarize(confusion(predictions.to_binary().successful, BinaryLabel))
    if not predictions.is_binary and all(record.confidence is not None for record in scored):
        strata = stratify_by_confidence(scored, min_samples)
        result['confidence'] = {level.value: stratum.to_dict() for level, stratum in strata.items()}
    return result
