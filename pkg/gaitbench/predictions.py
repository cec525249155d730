"""
Out-of-fold prediction records.
"""

from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterable, Optional, Tuple, Union

from gaitbench.domain import BinaryLabel, ClassLabel, Confidence, project_binary

Prediction = Union[ClassLabel, BinaryLabel]


def parse_prediction(value: str, binary: bool) -> Prediction:
    """Read a predicted label written by ``PredictionRecord.to_dict``."""
    if binary:
        return BinaryLabel(value)
    return ClassLabel.parse(value)


@dataclass(frozen=True)
class PredictionRecord:
    """
    One trial's ground truth and prediction with provenance.

    ``predicted`` is None for a trial whose classification failed; ``error`` then says why.
    Binary classifiers record a BinaryLabel prediction against the seven-class truth.
    """

    subject_id: str
    label: ClassLabel
    cycle_index: int
    predicted: Optional[Prediction]
    fold_id: int
    model_id: str
    grounded: Optional[bool] = None
    confidence: Optional[Confidence] = None
    justification: Optional[str] = None
    attempts: Optional[int] = None
    error: Optional[str] = None

    @property
    def key(self) -> Tuple[str, ClassLabel, int]:
        """(subject, label, cycle index) identity."""
        return (self.subject_id, self.label, self.cycle_index)

    @property
    def failed(self) -> bool:
        """True when no prediction was obtained."""
        return self.predicted is None

    def sort_key(self) -> Tuple[str, int, int]:
        """Order by subject, canonical label, cycle index."""
        return (self.subject_id, self.label.order, self.cycle_index)

    def to_dict(self) -> Dict[str, Any]:
        """JSON-friendly mapping."""
        return {
            'subject_id': self.subject_id,
            'label': self.label.value,
            'cycle_index': self.cycle_index,
            'predicted': None if self.predicted is None else self.predicted.value,
            'confidence': None if self.confidence is None else self.confidence.value,
            'justification': self.justification,
            'model_id': self.model_id,
            'grounded': self.grounded,
            'fold_id': self.fold_id,
            'attempts': self.attempts,
            'error': self.error,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], binary: bool = False) -> 'PredictionRecord':
        """Inverse of ``to_dict``; raises KeyError or ValueError on malformed input."""
        predicted = data['predicted']
        confidence = data.get('confidence')
        return cls(
            subject_id=data['subject_id'],
            label=ClassLabel.parse(data['label']),
            cycle_index=data['cycle_index'],
            predicted=None if predicted is None else parse_prediction(predicted, binary),
            confidence=None if confidence is None else Confidence(confidence),
            justification=data.get('justification'),
            model_id=data['model_id'],
            grounded=data.get('grounded'),
            fold_id=data['fold_id'],
            attempts=data.get('attempts'),
            error=data.get('error'),
        )


@dataclass(frozen=True)
class PredictionSet:
    """Aggregated out-of-fold predictions of one experiment run."""

    records: Tuple[PredictionRecord, ...]
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        """Keep records in (subject, label, cycle) order."""
        object.__setattr__(self, 'records', tuple(sorted(self.records, key=PredictionRecord.sort_key)))

    def __len__(self) -> int:
        """Number of records, failed ones included."""
        return len(self.records)

    def __iter__(self):
        """Iterate over records."""
        return iter(self.records)

    @property
    def successful(self) -> Tuple[PredictionRecord, ...]:
        """Records that carry a prediction."""
        return tuple(record for record in self.records if not record.failed)

    @property
    def failed(self) -> Tuple[PredictionRecord, ...]:
        """Records whose classification failed."""
        return tuple(record for record in self.records if record.failed)

    @property
    def is_binary(self) -> bool:
        """True when predictions live in the NORMAL / NOT_NORMAL space."""
        return any(isinstance(record.predicted, BinaryLabel) for record in self.records)

    def to_binary(self) -> 'PredictionSet':
        """Project every seven-class prediction to NORMAL / NOT_NORMAL."""
        return PredictionSet(
            tuple(
                replace(record, predicted=project_binary(record.predicted))
                if isinstance(record.predicted, ClassLabel) else record
                for record in self.records
            ),
            dict(self.metadata),
        )

    def with_confidence(self, confidence: Confidence) -> Tuple[PredictionRecord, ...]:
        """Successful records of one confidence level."""
        return tuple(record for record in self.successful if record.confidence == confidence)


def merge_records(parts: Iterable[Iterable[PredictionRecord]], metadata: Dict[str, Any]) -> PredictionSet:
    """Flatten per-fold record lists into one set."""
    return PredictionSet(tuple(record for part in parts for record in part), metadata)
