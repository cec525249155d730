"""
Run configuration and dispatch to the experiment arms.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Mapping, Optional, Tuple

from gaitbench import __version__
from gaitbench.client import BACKEND_KINDS, FAULT_MODES, BackendSpec, ChatBackend, make_backend
from gaitbench.datafiles import dataset_digest
from gaitbench.domain import Dataset
from gaitbench.exceptions import ConfigError
from gaitbench.experiments import (
    AccessLog,
    ExperimentResult,
    run_knn_experiment,
    run_llm_experiment,
    run_ocsvm_experiment,
)
from gaitbench.helpers import (
    check_known_fields,
    get_bool,
    get_choice,
    get_float,
    get_float_list,
    get_int,
    get_settings,
    sha256_text,
)
from gaitbench.prompts import load_template

logger = logging.getLogger(__name__)

ARMS = ('knn', 'ocsvm', 'llm')
PROVENANCE_FIELD = 'provenance'


@dataclass(frozen=True)
class RunConfig:
    """
    One experiment arm, fully resolved.

    ``to_dict`` output (the bundle's config.json) is accepted back by ``from_dict``.
    """

    arm: str
    dataset: str
    out: str = ''
    seed: int = 42
    jobs: int = 1
    k: int = 5
    standardize: bool = False
    gamma_factors: Tuple[float, ...] = ()
    nu_values: Tuple[float, ...] = ()
    tuning_folds: int = 3
    grounded: bool = False
    backend: str = 'mock'
    model: str = ''
    endpoint: str = ''
    max_retries: int = 3
    max_concurrent: int = 4
    fault: Optional[str] = None
    fault_fraction: float = 1.0
    fault_attempts: Optional[int] = None
    provenance: Dict[str, Any] = field(default_factory=dict, compare=False)

    FIELDS = ('arm', 'dataset', 'out', 'seed', 'jobs', 'k', 'standardize', 'gamma_factors', 'nu_values',
              'tuning_folds', 'grounded', 'backend', 'model', 'endpoint', 'max_retries', 'max_concurrent',
              'fault', 'fault_fraction', 'fault_attempts')

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'RunConfig':
        """
        Validate a run config mapping; missing fields come from GAITBENCH_SETTINGS.

        :raises ConfigError: naming the first invalid field.
        """
        check_known_fields(data, cls.FIELDS + (PROVENANCE_FIELD,))
        gaitbench_settings = get_settings()
        arm = get_choice(data, 'arm', None, ARMS)
        if arm is None:
            raise ConfigError('arm', f'expected one of {", ".join(ARMS)}')
        dataset = data.get('dataset')
        if not isinstance(dataset, str) or not dataset:
            raise ConfigError('dataset', 'a dataset path is required')
        out = data.get('out') or ''
        if not isinstance(out, str):
            raise ConfigError('out', f'expected a directory path, got {out!r}')

        standardize_default = gaitbench_settings['OCSVM_STANDARDIZE' if arm == 'ocsvm' else 'KNN_STANDARDIZE']
        standardize = standardize_default
        if data.get('standardize') is not None:
            standardize = get_bool(data, 'standardize', standardize_default)

        backend = get_choice(data, 'backend', 'mock', BACKEND_KINDS)
        model = data.get('model') or (gaitbench_settings['LLM_MODEL'] if backend == 'http' else '')
        endpoint = data.get('endpoint') or (gaitbench_settings['LLM_ENDPOINT'] if backend == 'http' else '')
        for name, value in (('model', model), ('endpoint', endpoint)):
            if not isinstance(value, str):
                raise ConfigError(name, f'expected text, got {value!r}')

        provenance = data.get(PROVENANCE_FIELD) or {}
        if not isinstance(provenance, dict):
            raise ConfigError(PROVENANCE_FIELD, 'expected a mapping')

        fault_attempts = data.get('fault_attempts')
        if fault_attempts is not None:
            fault_attempts = get_int(data, 'fault_attempts', 0, minimum=0)

        config = cls(
            arm=arm,
            dataset=dataset,
            out=out,
            seed=get_int(data, 'seed', 42),
            jobs=get_int(data, 'jobs', 1, minimum=1),
            k=get_int(data, 'k', gaitbench_settings['KNN_NEIGHBORS'], minimum=1),
            standardize=standardize,
            gamma_factors=tuple(get_float_list(data, 'gamma_factors', gaitbench_settings['OCSVM_GAMMA_FACTORS'])),
            nu_values=tuple(get_float_list(data, 'nu_values', gaitbench_settings['OCSVM_NU_VALUES'])),
            tuning_folds=get_int(data, 'tuning_folds', gaitbench_settings['TUNING_FOLDS'], minimum=2),
            grounded=get_bool(data, 'grounded', False),
            backend=backend,
            model=model,
            endpoint=endpoint,
            max_retries=get_int(data, 'max_retries', gaitbench_settings['LLM_MAX_RETRIES'], minimum=0),
            max_concurrent=get_int(data, 'max_concurrent', gaitbench_settings['LLM_MAX_CONCURRENT'], minimum=1),
            fault=get_choice(data, 'fault', None, FAULT_MODES),
            fault_fraction=get_float(data, 'fault_fraction', 1.0, minimum=0.0),
            fault_attempts=fault_attempts,
            provenance=dict(provenance),
        )
        if any(nu >= 1 for nu in config.nu_values):
            raise ConfigError('nu_values', 'every nu must be in (0, 1)')
        if config.fault_fraction > 1:
            raise ConfigError('fault_fraction', f'must be in [0, 1], got {config.fault_fraction}')
        if config.arm == 'llm':
            config.backend_spec()
        return config

    def override(self, **values: Any) -> 'RunConfig':
        """Re-validated copy with some fields replaced; None values are ignored."""
        data = self.to_dict()
        data.pop(PROVENANCE_FIELD)
        data.update({name: value for name, value in values.items() if value is not None})
        return RunConfig.from_dict(data)

    def backend_spec(self) -> BackendSpec:
        """Backend description of an llm run."""
        gaitbench_settings = get_settings()
        return BackendSpec(
            kind=self.backend,
            model_id=self.model,
            endpoint=self.endpoint,
            max_retries=self.max_retries,
            max_concurrent=self.max_concurrent,
            timeout=tuple(gaitbench_settings['LLM_TIMEOUT']),
            fault=self.fault,
            fault_fraction=self.fault_fraction,
            fault_attempts=self.fault_attempts,
        )

    def to_dict(self) -> Dict[str, Any]:
        """JSON-friendly mapping."""
        data = {name: getattr(self, name) for name in self.FIELDS}
        data['gamma_factors'] = list(self.gamma_factors)
        data['nu_values'] = list(self.nu_values)
        data[PROVENANCE_FIELD] = dict(self.provenance)
        return data

    def digest(self) -> str:
        """SHA-256 of the resolved fields, provenance and output directory excluded."""
        data = self.to_dict()
        data.pop(PROVENANCE_FIELD)
        data.pop('out')
        return sha256_text(repr(sorted(data.items())))


def config_echo(config: RunConfig, dataset: Dataset) -> Dict[str, Any]:
    """Resolved config plus the provenance needed to re-run it."""
    provenance = {
        'gaitbench_version': __version__,
        'config_sha256': config.digest(),
        'dataset_sha256': dataset_digest(dataset),
        'seed': config.seed,
    }
    if config.arm == 'llm':
        template = load_template(config.grounded)
        provenance['template'] = template.name
        provenance['template_sha256'] = template.sha256
    return replace(config, provenance=provenance).to_dict()


def check_provenance(config: RunConfig, dataset: Dataset) -> None:
    """Warn when a re-run from an echo reads a different dataset than the original run."""
    recorded = config.provenance.get('dataset_sha256')
    if recorded and recorded != dataset_digest(dataset):
        logger.warning('Dataset %s differs from the one recorded in the config echo (%s).', config.dataset, recorded)


def execute_run(
    config: RunConfig,
    dataset: Dataset,
    access_log: Optional[AccessLog] = None,
    backend: Optional[ChatBackend] = None,
) -> ExperimentResult:
    """
    Run the configured arm under leave-one-subject-out.

    The llm arm uses ``backend`` when given and builds one from the config otherwise.

    :raises MissingCredentialError: for the http backend without an API key, before any request.
    """
    check_provenance(config, dataset)
    gaitbench_settings = get_settings()
    logger.info('Running the %s arm on %d cycles (seed %d, %d job(s))', config.arm, len(dataset), config.seed,
                config.jobs)
    if config.arm == 'knn':
        result = run_knn_experiment(
            dataset, k=config.k, standardize=config.standardize, jobs=config.jobs, access_log=access_log,
        )
    elif config.arm == 'ocsvm':
        result = run_ocsvm_experiment(
            dataset,
            gamma_factors=config.gamma_factors,
            nu_values=config.nu_values,
            tuning_folds=config.tuning_folds,
            standardize=config.standardize,
            seed=config.seed,
            jobs=config.jobs,
            solver_options={
                'tolerance': gaitbench_settings['SOLVER_TOLERANCE'],
                'max_iterations': gaitbench_settings['SOLVER_MAX_ITERATIONS'],
                'max_gram_size': gaitbench_settings['MAX_GRAM_SIZE'],
            },
            access_log=access_log,
        )
    else:
        spec = config.backend_spec()
        if backend is None:
            backend = make_backend(spec)
        result = run_llm_experiment(
            dataset,
            backend,
            grounded=config.grounded,
            spec=spec,
            jobs=config.jobs,
            backoff_multiplier=gaitbench_settings['LLM_BACKOFF_MULTIPLIER'],
            backoff_max=gaitbench_settings['LLM_BACKOFF_MAX'],
            access_log=access_log,
        )
    result.predictions.metadata['config_sha256'] = config.digest()
    return result
