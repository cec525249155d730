"""Common Settings"""
from typing import Any

DEFAULT_GAITBENCH_SETTINGS = {
    'KNN_NEIGHBORS': 5,
    'KNN_STANDARDIZE': False,
    'OCSVM_STANDARDIZE': True,
    'OCSVM_GAMMA_FACTORS': [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0],
    'OCSVM_NU_VALUES': [0.01, 0.05, 0.1, 0.2, 0.3, 0.5],
    'TUNING_FOLDS': 3,
    'SOLVER_TOLERANCE': 1e-6,
    'SOLVER_MAX_ITERATIONS': 100000,
    'MAX_GRAM_SIZE': 5000,
    'LLM_ENDPOINT': 'https://api.openai.com/v1',
    'LLM_MODEL': 'gpt-5',
    'LLM_MAX_RETRIES': 3,
    'LLM_MAX_CONCURRENT': 4,
    'LLM_TIMEOUT': (5, 120),
    'LLM_BACKOFF_MULTIPLIER': 1.0,
    'LLM_BACKOFF_MAX': 30.0,
    'LLM_TEMPERATURE_MODEL_PREFIXES': ('gpt-4',),
    'LLM_SPLIT_SYSTEM_MESSAGE': False,
    'CONFIDENCE_MIN_SAMPLES': 5,
    'API_KEY_ENV': 'GAITBENCH_API_KEY',
}


def plugin_settings(settings: Any) -> None:
    """
    Install GAITBENCH_SETTINGS on a settings object, keeping the keys it already overrides.
    """
    overrides = getattr(settings, 'GAITBENCH_SETTINGS', None) or {}
    settings.GAITBENCH_SETTINGS = {**DEFAULT_GAITBENCH_SETTINGS, **overrides}
