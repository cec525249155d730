"""
JSON Lines dataset files.

One object per cycle::

    {"subject_id": "S01", "label": "BOUNCY", "cycle_index": 0,
     "channels": {"pelvis_tilt": {"center": [...]}, "hip_flexion": {"left": [...], "right": [...]}, ...}}

Values are written at full precision. Cycles whose arrays are not 11 samples long are raw
recordings and are time-normalized on load.
"""

import hashlib
import json
import logging
from typing import Any, Dict, List

from gaitbench.domain import CHANNELS, ChannelId, ClassLabel, Dataset, Feature, GaitCycle, Side, validate_dataset
from gaitbench.exceptions import ChannelError, DatasetError
from gaitbench.preprocess import RawCycle, finite, is_time_normalized, time_normalize

logger = logging.getLogger(__name__)

RECORD_FIELDS = ('subject_id', 'label', 'cycle_index', 'channels')


def cycle_to_record(cycle: GaitCycle) -> Dict[str, Any]:
    """Nested feature -> side -> values mapping, in canonical channel order."""
    channels: Dict[str, Dict[str, List[float]]] = {}
    for channel in CHANNELS:
        channels.setdefault(channel.feature.value, {})[channel.side.value] = list(cycle.channels[channel])
    return {
        'subject_id': cycle.subject_id,
        'label': cycle.label.value,
        'cycle_index': cycle.cycle_index,
        'channels': channels,
    }


def dataset_lines(dataset: Dataset) -> List[str]:
    """Serialized JSON Lines, one string per cycle, in dataset order."""
    return [json.dumps(cycle_to_record(cycle)) for cycle in dataset.cycles]


def save_dataset(dataset: Dataset, path: str) -> None:
    """Write a dataset as JSON Lines."""
    with open(path, 'w', encoding='utf8') as dataset_file:
        for line in dataset_lines(dataset):
            dataset_file.write(line + '\n')
    logger.info('Wrote %d cycles to %s', len(dataset), path)


def dataset_digest(dataset: Dataset) -> str:
    """SHA-256 of the dataset's JSON Lines bytes."""
    digest = hashlib.sha256()
    for line in dataset_lines(dataset):
        digest.update((line + '\n').encode('utf8'))
    return digest.hexdigest()


def _parse_channels(raw_channels: Any) -> Dict[ChannelId, List[float]]:
    if not isinstance(raw_channels, dict):
        raise DatasetError('"channels" must be an object')
    channels = {}
    for feature_name, sides in raw_channels.items():
        if not isinstance(sides, dict):
            raise ChannelError(feature_name, 'expected an object keyed by side')
        for side_name, values in sides.items():
            name = f'{feature_name}_{side_name}'
            try:
                channel = ChannelId(Feature(feature_name), Side(side_name))
            except ValueError as exc:
                raise ChannelError(name, f'invalid channel: {exc}') from exc
            if not isinstance(values, list) or not finite(values):
                raise ChannelError(name, 'expected a list of finite numbers')
            channels[channel] = values
    return channels


def record_to_cycle(record: Any) -> GaitCycle:
    """
    Build a GaitCycle from one decoded JSON object, resampling raw-length channels.

    :raises DatasetError: on a malformed record.
    """
    if not isinstance(record, dict):
        raise DatasetError('each line must be a JSON object')
    missing = [name for name in RECORD_FIELDS if name not in record]
    if missing:
        raise DatasetError(f'missing field(s): {", ".join(missing)}')
    try:
        label = ClassLabel.parse(record['label'])
    except ValueError as exc:
        raise DatasetError(str(exc)) from exc
    cycle_index = record['cycle_index']
    if isinstance(cycle_index, bool) or not isinstance(cycle_index, int) or cycle_index < 0:
        raise DatasetError(f'cycle_index must be a non-negative integer, got {cycle_index!r}')
    subject_id = record['subject_id']
    if not isinstance(subject_id, str) or not subject_id:
        raise DatasetError(f'subject_id must be a non-empty string, got {subject_id!r}')

    channels = _parse_channels(record['channels'])
    if is_time_normalized(channels):
        for channel in CHANNELS:
            if channel not in channels:
                raise ChannelError(channel.name, 'channel missing')
        return GaitCycle(subject_id, label, cycle_index, channels)
    return time_normalize(RawCycle(subject_id, label, cycle_index, channels))


def load_dataset(path: str) -> Dataset:
    """
    Read a JSON Lines dataset.

    :raises DatasetError: naming the line of the first malformed record, or the first invariant violation.
    """
    cycles = []
    try:
        with open(path, encoding='utf8') as dataset_file:
            for line_number, line in enumerate(dataset_file, start=1):
                if not line.strip():
                    continue
                try:
                    cycles.append(record_to_cycle(json.loads(line)))
                except (ValueError, DatasetError) as exc:
                    raise DatasetError(f'{path}:{line_number}: {exc}') from exc
    except OSError as exc:
        raise DatasetError(f'cannot read {path}: {exc}') from exc

    dataset = Dataset(tuple(cycles))
    report = validate_dataset(dataset)
    if not report.is_valid:
        first = report.violations[0]
        raise DatasetError(
            f'{path}: {len(report)} violation(s), first: {first.kind} at '
            f'{first.subject_id}/{first.label}/{first.cycle_index}: {first.message}'
        )
    logger.info('Loaded %d cycles (%d subjects) from %s', len(dataset), len(dataset.subjects), path)
    return dataset
