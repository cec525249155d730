"""
Results bundle: the directory a run leaves behind.
"""

import csv
import json
import logging
import os
from typing import Any, Dict, List

import numpy as np

from gaitbench.domain import BinaryLabel, ClassLabel, Confidence
from gaitbench.experiments import ExperimentResult
from gaitbench.metrics import ConfusionMatrix, compute_metrics, confusion
from gaitbench.predictions import PredictionRecord

logger = logging.getLogger(__name__)

PREDICTIONS_FILE = 'predictions.jsonl'
METRICS_FILE = 'metrics.json'
CONFUSION_MULTICLASS_FILE = 'confusion_multiclass.csv'
CONFUSION_BINARY_FILE = 'confusion_binary.csv'
TUNING_FILE = 'tuning.json'
DIAGNOSTICS_FILE = 'diagnostics.json'
VERDICTS_FILE = 'verdicts.jsonl'
CONFIG_FILE = 'config.json'


def confidence_confusion_file(level: str) -> str:
    """confusion_multiclass_high.csv and friends."""
    return f'confusion_multiclass_{level}.csv'


def _json_default(value: Any) -> Any:
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f'{type(value).__name__} is not JSON serializable')


def _write_json(path: str, payload: Any) -> None:
    with open(path, 'w', encoding='utf8') as output:
        json.dump(payload, output, indent=2, default=_json_default)
        output.write('\n')


def _write_jsonl(path: str, rows: List[Dict[str, Any]]) -> None:
    with open(path, 'w', encoding='utf8') as output:
        for row in rows:
            output.write(json.dumps(row, default=_json_default))
            output.write('\n')


def _write_confusion(path: str, cm: ConfusionMatrix) -> None:
    with open(path, 'w', encoding='utf8', newline='') as output:
        csv.writer(output, lineterminator='\n').writerows(cm.to_rows())


def write_bundle(
    out_dir: str, result: ExperimentResult, echo: Dict[str, Any], min_samples: int = 5,
) -> List[str]:
    """
    Write every bundle file for one run and return their names.

    predictions.jsonl depends only on the run's inputs, so re-running from config.json
    reproduces it byte for byte.
    """
    os.makedirs(out_dir, exist_ok=True)
    predictions = result.predictions
    written = []

    def target(name: str) -> str:
        written.append(name)
        return os.path.join(out_dir, name)

    _write_jsonl(target(PREDICTIONS_FILE), [record.to_dict() for record in predictions])

    metrics = compute_metrics(predictions, min_samples)
    _write_json(target(METRICS_FILE), {'run': dict(predictions.metadata), **metrics})

    scored = predictions.successful
    if scored:
        if not predictions.is_binary:
            _write_confusion(target(CONFUSION_MULTICLASS_FILE), confusion(scored, ClassLabel))
        _write_confusion(target(CONFUSION_BINARY_FILE), confusion(predictions.to_binary().successful, BinaryLabel))
    for level, stratum in (metrics['confidence'] or {}).items():
        if stratum['insufficient']:
            continue
        subset = predictions.with_confidence(Confidence(level))
        _write_confusion(target(confidence_confusion_file(level)), confusion(subset, ClassLabel))

    if predictions.metadata.get('arm') == 'ocsvm':
        _write_json(target(TUNING_FILE), result.tuning)
    if predictions.metadata.get('arm') == 'llm':
        _write_jsonl(target(VERDICTS_FILE), result.verdicts)
    _write_json(target(DIAGNOSTICS_FILE), result.diagnostics())
    _write_json(target(CONFIG_FILE), echo)

    logger.info('Wrote %d files to %s', len(written), out_dir)
    return written


def read_predictions(path: str, binary: bool) -> List[PredictionRecord]:
    """
    Records of a predictions.jsonl file.

    :raises ValueError: or KeyError on a malformed line.
    """
    with open(path, encoding='utf8') as source:
        return [PredictionRecord.from_dict(json.loads(line), binary=binary) for line in source if line.strip()]
