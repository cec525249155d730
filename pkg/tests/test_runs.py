"""Tests for run configuration and dispatch."""
import os
from unittest.mock import patch

import pytest
from ddt import data, ddt, unpack
from django.test import SimpleTestCase

from gaitbench import __version__
from gaitbench.datafiles import dataset_digest
from gaitbench.exceptions import ConfigError, MissingCredentialError
from gaitbench.experiments import AccessLog
from gaitbench.prompts import load_template
from gaitbench.runs import RunConfig, check_provenance, config_echo, execute_run


@ddt
class TestRunConfig(SimpleTestCase):
    """Validation and defaults."""

    def test_defaults_come_from_settings(self):
        config = RunConfig.from_dict({'arm': 'knn', 'dataset': 'cohort.jsonl'})
        assert config.k == 5
        assert config.standardize is False
        assert config.max_concurrent == 2
        assert config.gamma_factors == (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0)

    def test_ocsvm_standardizes_by_default(self):
        assert RunConfig.from_dict({'arm': 'ocsvm', 'dataset': 'd'}).standardize is True
        assert RunConfig.from_dict({'arm': 'ocsvm', 'dataset': 'd', 'standardize': False}).standardize is False

    def test_http_backend_gets_model_and_endpoint(self):
        config = RunConfig.from_dict({'arm': 'llm', 'dataset': 'd', 'backend': 'http'})
        assert config.model == 'gpt-5'
        assert config.endpoint == 'https://api.openai.com/v1'
        assert RunConfig.from_dict({'arm': 'llm', 'dataset': 'd'}).model == ''

    @data(
        ({}, 'arm'),
        ({'arm': 'svm', 'dataset': 'd'}, 'arm'),
        ({'arm': 'knn'}, 'dataset'),
        ({'arm': 'knn', 'dataset': 'd', 'jobs': 0}, 'jobs'),
        ({'arm': 'ocsvm', 'dataset': 'd', 'nu_values': [0.1, 1.0]}, 'nu_values'),
        ({'arm': 'ocsvm', 'dataset': 'd', 'tuning_folds': 1}, 'tuning_folds'),
        ({'arm': 'llm', 'dataset': 'd', 'fault': 'garbage', 'fault_fraction': 2.0}, 'fault_fraction'),
        ({'arm': 'llm', 'dataset': 'd', 'max_retries': -1}, 'max_retries'),
        ({'arm': 'llm', 'dataset': 'd', 'provenance': 'v1'}, 'provenance'),
        ({'arm': 'llm', 'dataset': 'd', 'temperature': 0}, 'temperature'),
    )
    @unpack
    def test_invalid(self, values, field):
        with self.assertRaises(ConfigError) as context:
            RunConfig.from_dict(values)
        assert context.exception.field == field

    def test_to_dict_is_accepted_back(self):
        config = RunConfig.from_dict({'arm': 'llm', 'dataset': 'd', 'grounded': True, 'fault': 'fence'})
        assert RunConfig.from_dict(config.to_dict()) == config

    def test_override(self):
        config = RunConfig.from_dict({'arm': 'knn', 'dataset': 'd', 'k': 3})
        changed = config.override(k=7, out=None)
        assert (changed.k, changed.dataset) == (7, 'd')
        with self.assertRaises(ConfigError):
            config.override(k=0)

    def test_digest_ignores_output_and_provenance(self):
        config = RunConfig.from_dict({'arm': 'knn', 'dataset': 'd', 'out': 'a'})
        same = RunConfig.from_dict({'arm': 'knn', 'dataset': 'd', 'out': 'b', 'provenance': {'seed': 1}})
        assert config.digest() == same.digest()
        assert config.digest() != config.override(k=3).digest()


def test_config_echo(small_dataset):
    config = RunConfig.from_dict({'arm': 'llm', 'dataset': 'd', 'grounded': True})
    echo = config_echo(config, small_dataset)
    provenance = echo['provenance']
    assert provenance['gaitbench_version'] == __version__
    assert provenance['config_sha256'] == config.digest()
    assert provenance['dataset_sha256'] == dataset_digest(small_dataset)
    assert provenance['template_sha256'] == load_template(True).sha256
    assert RunConfig.from_dict(echo).provenance == provenance


def test_provenance_mismatch_is_logged(small_dataset, caplog):
    config = RunConfig.from_dict({'arm': 'knn', 'dataset': 'd', 'provenance': {'dataset_sha256': 'abc'}})
    check_provenance(config, small_dataset)
    assert 'differs from the one recorded' in caplog.text


@pytest.mark.parametrize('arm, values', [
    ('knn', {'k': 3}),
    ('ocsvm', {'gamma_factors': [1.0], 'nu_values': [0.5]}),
    ('llm', {'grounded': True}),
])
def test_execute_run(small_dataset, arm, values):
    config = RunConfig.from_dict({'arm': arm, 'dataset': 'd', **values})
    access_log = AccessLog()
    result = execute_run(config, small_dataset, access_log=access_log)
    assert result.predictions.metadata['arm'] == arm
    assert result.predictions.metadata['config_sha256'] == config.digest()
    assert len(result.predictions) == len(small_dataset)
    assert access_log.leaks(result.plan) == []


def test_execute_run_checks_the_credential_first(small_dataset):
    config = RunConfig.from_dict({'arm': 'llm', 'dataset': 'd', 'backend': 'http'})
    with patch.dict(os.environ, {}, clear=True), patch('requests.post') as mock_post:
        with pytest.raises(MissingCredentialError):
            execute_run(config, small_dataset)
    mock_post.assert_not_called()
