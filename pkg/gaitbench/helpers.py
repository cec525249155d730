"""Helpers for gaitbench: settings access and config-file validation."""

import hashlib
import math
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence

import yaml
from django.conf import settings

from gaitbench.exceptions import ConfigError
from gaitbench.settings.common import DEFAULT_GAITBENCH_SETTINGS


def get_settings() -> Dict[str, Any]:
    """
    Return GAITBENCH_SETTINGS merged over the defaults.

    Works without a configured Django project, in which case the defaults are returned.
    """
    overrides = {}
    if settings.configured:
        overrides = getattr(settings, 'GAITBENCH_SETTINGS', None) or {}
    return {**DEFAULT_GAITBENCH_SETTINGS, **overrides}


def load_config_file(path: str) -> Dict[str, Any]:
    """
    Read a YAML (or JSON) config file into a mapping.

    :raises ConfigError: If the file is unreadable or not a mapping.
    """
    try:
        with open(path, encoding='utf8') as config_file:
            data = yaml.safe_load(config_file)
    except OSError as exc:
        raise ConfigError('config', f'cannot read {path}: {exc}') from exc
    except yaml.YAMLError as exc:
        raise ConfigError('config', f'{path} is not valid YAML/JSON: {exc}') from exc

    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError('config', f'{path} must contain a mapping at the top level')
    return data


def check_known_fields(data: Mapping[str, Any], allowed: Iterable[str]) -> None:
    """Reject keys that are not part of a config schema."""
    allowed = set(allowed)
    for key in data:
        if key not in allowed:
            raise ConfigError(key, 'unknown field')


def get_int(data: Mapping[str, Any], field: str, default: int, minimum: Optional[int] = None) -> int:
    """Read an integer field (booleans are rejected)."""
    value = data.get(field, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(field, f'expected an integer, got {value!r}')
    if minimum is not None and value < minimum:
        raise ConfigError(field, f'must be >= {minimum}, got {value}')
    return value


def get_float(
    data: Mapping[str, Any],
    field: str,
    default: float,
    minimum: Optional[float] = None,
    strictly_positive: bool = False,
) -> float:
    """Read a finite real field."""
    value = data.get(field, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(field, f'expected a number, got {value!r}')
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(field, 'must be finite')
    if strictly_positive and value <= 0:
        raise ConfigError(field, f'must be > 0, got {value}')
    if minimum is not None and value < minimum:
        raise ConfigError(field, f'must be >= {minimum}, got {value}')
    return value


def get_bool(data: Mapping[str, Any], field: str, default: bool) -> bool:
    """Read a boolean field."""
    value = data.get(field, default)
    if not isinstance(value, bool):
        raise ConfigError(field, f'expected true/false, got {value!r}')
    return value


def get_choice(data: Mapping[str, Any], field: str, default: Optional[str], choices: Sequence[str]) -> Optional[str]:
    """Read a string field restricted to a closed set."""
    value = data.get(field, default)
    if value is None and default is None:
        return None
    if value not in choices:
        raise ConfigError(field, f'expected one of {", ".join(choices)}, got {value!r}')
    return value


def get_float_list(data: Mapping[str, Any], field: str, default: Sequence[float]) -> List[float]:
    """Read a non-empty list of positive reals."""
    value = data.get(field, default)
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(field, 'expected a non-empty list of numbers')
    result = []
    for item in value:
        if isinstance(item, bool) or not isinstance(item, (int, float)) or not math.isfinite(item) or item <= 0:
            raise ConfigError(field, f'expected positive numbers, got {item!r}')
        result.append(float(item))
    return result


def sha256_text(text: str) -> str:
    """Return the hex SHA-256 digest of a text."""
    return hashlib.sha256(text.encode('utf8')).hexdigest()
