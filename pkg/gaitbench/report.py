"""
Comparison table over one or more results bundles.

Rows follow the layout of the published comparison: overall multiclass and binary F1/MCC, then
share of samples, F1 and MCC per self-rated confidence level. One column per run.
"""

import csv
import json
import math
import os
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

from gaitbench.bundle import METRICS_FILE, PREDICTIONS_FILE, read_predictions
from gaitbench.domain import Confidence
from gaitbench.exceptions import ReportError

MISSING = '—'
INSUFFICIENT = 'insufficient'
SECTIONS = ('multiclass', 'binary')
STRATUM_FIELDS = ('n', 'sample_percent', 'macro_f1', 'mcc', 'insufficient')


@dataclass(frozen=True)
class BundleSummary:
    name: str
    path: str
    metrics: Dict[str, Any]


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _check_section(path: str, name: str, section: Any) -> None:
    if section is None:
        return
    if not isinstance(section, dict):
        raise ReportError(path, name, 'expected an object or null')
    for key in ('mcc', 'macro_f1'):
        if not _is_number(section.get(key)):
            raise ReportError(path, f'{name}.{key}', f'expected a number, got {section.get(key)!r}')


def _check_confidence(path: str, strata: Any) -> None:
    if strata is None:
        return
    if not isinstance(strata, dict):
        raise ReportError(path, 'confidence', 'expected an object or null')
    for level in Confidence:
        stratum = strata.get(level.value)
        field_prefix = f'confidence.{level.value}'
        if not isinstance(stratum, dict):
            raise ReportError(path, field_prefix, 'missing')
        for key in STRATUM_FIELDS:
            if key not in stratum:
                raise ReportError(path, f'{field_prefix}.{key}', 'missing')
        if not stratum['insufficient']:
            _check_section(path, field_prefix, stratum)


def load_bundle(path: str) -> BundleSummary:
    """
    Read and check a bundle's metrics.json against its predictions.jsonl.

    :raises ReportError: naming the file and field that is missing or malformed.
    """
    metrics_path = os.path.join(path, METRICS_FILE)
    try:
        with open(metrics_path, encoding='utf8') as source:
            metrics = json.load(source)
    except OSError as exc:
        raise ReportError(metrics_path, '(file)', f'cannot read: {exc.strerror}') from exc
    except ValueError as exc:
        raise ReportError(metrics_path, '(file)', f'not valid JSON: {exc}') from exc
    if not isinstance(metrics, dict):
        raise ReportError(metrics_path, '(file)', 'expected a JSON object')

    for key in ('n_records',) + SECTIONS + ('confidence',):
        if key not in metrics:
            raise ReportError(metrics_path, key, 'missing')
    if not isinstance(metrics['n_records'], int):
        raise ReportError(metrics_path, 'n_records', 'expected an integer')
    for name in SECTIONS:
        _check_section(metrics_path, name, metrics[name])
    _check_confidence(metrics_path, metrics['confidence'])

    predictions_path = os.path.join(path, PREDICTIONS_FILE)
    try:
        records = read_predictions(predictions_path, binary=metrics['multiclass'] is None)
    except OSError as exc:
        raise ReportError(predictions_path, '(file)', f'cannot read: {exc.strerror}') from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise ReportError(predictions_path, 'record', f'malformed record: {exc!r}') from exc
    if len(records) != metrics['n_records']:
        raise ReportError(
            predictions_path, 'n_records', f'{len(records)} records, metrics.json says {metrics["n_records"]}',
        )

    return BundleSummary(os.path.basename(os.path.normpath(path)), path, metrics)


def format_value(value: Optional[float]) -> str:
    """Two-decimal cell text, or the missing marker."""
    if value is None:
        return MISSING
    return f'{value:.2f}'


def _section_cell(metrics: Dict[str, Any], section: str, key: str) -> str:
    values = metrics.get(section)
    return MISSING if values is None else format_value(values[key])


def _stratum_cell(metrics: Dict[str, Any], level: Confidence, key: str) -> str:
    strata = metrics.get('confidence')
    if strata is None:
        return MISSING
    stratum = strata[level.value]
    if key == 'sample_percent':
        return stratum['sample_percent']
    if stratum['insufficient']:
        return f'{INSUFFICIENT} (n={stratum["n"]})'
    return format_value(stratum[key])


def build_table(summaries: Sequence[BundleSummary]) -> List[List[str]]:
    """Header row of run names, then one row per metric."""
    rows = [['metric'] + [summary.name for summary in summaries]]
    for section, title in (('multiclass', 'Multiclass'), ('binary', 'Binary')):
        rows.append([f'{title} F1'] + [_section_cell(summary.metrics, section, 'macro_f1') for summary in summaries])
        rows.append([f'{title} MCC'] + [_section_cell(summary.metrics, section, 'mcc') for summary in summaries])
    for level in Confidence:
        title = level.value.capitalize()
        for key, label in (('sample_percent', '% samples'), ('macro_f1', 'F1'), ('mcc', 'MCC')):
            rows.append([f'{title} confidence {label}'] + [
                _stratum_cell(summary.metrics, level, key) for summary in summaries
            ])
    return rows


def render_text(rows: List[List[str]]) -> str:
    """Fixed-width table with a rule under the header."""
    widths = [max(len(row[column]) for row in rows) for column in range(len(rows[0]))]

    def line(row: List[str]) -> str:
        return '  '.join(
            cell.ljust(width) if column == 0 else cell.rjust(width)
            for column, (cell, width) in enumerate(zip(row, widths))
        ).rstrip()

    rule = '  '.join('-' * width for width in widths)
    return '\n'.join([line(rows[0]), rule] + [line(row) for row in rows[1:]]) + '\n'


def write_csv(rows: List[List[str]], path: str) -> None:
    """The same cells as the text table, one CSV row each."""
    with open(path, 'w', encoding='utf8', newline='') as output:
        csv.writer(output, lineterminator='\n').writerows(rows)
