"""Tests for the bundle comparison table."""
import csv
import json

import pytest

from gaitbench.bundle import METRICS_FILE, PREDICTIONS_FILE, write_bundle
from gaitbench.client import MockBackend
from gaitbench.exceptions import ReportError
from gaitbench.experiments import run_knn_experiment, run_llm_experiment
from gaitbench.report import INSUFFICIENT, MISSING, build_table, format_value, load_bundle, render_text, write_csv


@pytest.fixture(scope='module')
def bundles(tmp_path_factory, small_dataset):
    root = tmp_path_factory.mktemp('bundles')
    write_bundle(str(root / 'knn'), run_knn_experiment(small_dataset, k=3), {})
    llm = run_llm_experiment(small_dataset, MockBackend(), grounded=True, backoff_multiplier=0)
    write_bundle(str(root / 'llm-grounded'), llm, {}, min_samples=10 ** 6)
    return root


def row(rows, title):
    return next(cells for cells in rows if cells[0] == title)


def test_table_layout(bundles):
    summaries = [load_bundle(str(bundles / 'knn')), load_bundle(str(bundles / 'llm-grounded'))]
    rows = build_table(summaries)
    assert rows[0] == ['metric', 'knn', 'llm-grounded']
    assert [cells[0] for cells in rows[1:5]] == ['Multiclass F1', 'Multiclass MCC', 'Binary F1', 'Binary MCC']
    assert [cells[0] for cells in rows[5:8]] == [
        'High confidence % samples', 'High confidence F1', 'High confidence MCC',
    ]
    assert len(rows) == 1 + 4 + 9

    knn_mcc = summaries[0].metrics['multiclass']['mcc']
    assert row(rows, 'Multiclass MCC')[1] == f'{knn_mcc:.2f}'
    assert row(rows, 'High confidence F1')[1] == MISSING
    assert row(rows, 'High confidence F1')[2].startswith(f'{INSUFFICIENT} (n=')
    percents = [float(row(rows, f'{level} confidence % samples')[2]) for level in ('High', 'Medium', 'Low')]
    assert sum(percents) == pytest.approx(100.0, abs=0.02)


def test_text_and_csv(tmp_path, bundles):
    rows = build_table([load_bundle(str(bundles / 'knn'))])
    text = render_text(rows)
    lines = text.splitlines()
    assert lines[0].startswith('metric')
    assert set(lines[1]) <= {'-', ' '}
    assert len(lines) == len(rows) + 1

    path = tmp_path / 'table.csv'
    write_csv(rows, str(path))
    with open(path, encoding='utf8', newline='') as source:
        assert list(csv.reader(source)) == rows


def test_format_value():
    assert format_value(None) == MISSING
    assert format_value(0.876) == '0.88'
    assert format_value(-0.0049) == '-0.00'


def copy_bundle(source, target):
    target.mkdir()
    for name in (METRICS_FILE, PREDICTIONS_FILE):
        (target / name).write_bytes((source / name).read_bytes())


def test_missing_metrics_field(tmp_path, bundles):
    broken = tmp_path / 'broken'
    copy_bundle(bundles / 'knn', broken)
    metrics = json.loads((broken / METRICS_FILE).read_text(encoding='utf8'))
    del metrics['binary']
    (broken / METRICS_FILE).write_text(json.dumps(metrics), encoding='utf8')
    with pytest.raises(ReportError) as error:
        load_bundle(str(broken))
    assert error.value.field == 'binary'
    assert error.value.path.endswith(METRICS_FILE)


def test_malformed_metric_value(tmp_path, bundles):
    broken = tmp_path / 'broken'
    copy_bundle(bundles / 'knn', broken)
    metrics = json.loads((broken / METRICS_FILE).read_text(encoding='utf8'))
    metrics['multiclass']['mcc'] = 'high'
    (broken / METRICS_FILE).write_text(json.dumps(metrics), encoding='utf8')
    with pytest.raises(ReportError) as error:
        load_bundle(str(broken))
    assert error.value.field == 'multiclass.mcc'


def test_prediction_count_mismatch(tmp_path, bundles):
    broken = tmp_path / 'broken'
    copy_bundle(bundles / 'knn', broken)
    lines = (broken / PREDICTIONS_FILE).read_text(encoding='utf8').splitlines()
    (broken / PREDICTIONS_FILE).write_text('\n'.join(lines[:-1]) + '\n', encoding='utf8')
    with pytest.raises(ReportError) as error:
        load_bundle(str(broken))
    assert error.value.field == 'n_records'


def test_missing_bundle(tmp_path):
    with pytest.raises(ReportError) as error:
        load_bundle(str(tmp_path / 'nowhere'))
    assert error.value.field == '(file)'
