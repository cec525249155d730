"""
Time normalization, spline resampling, the 143-dimensional wide layout and standardization.
"""

import math
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence, Union

import numpy as np
from scipy.interpolate import CubicSpline

from gaitbench.domain import CHANNELS, N_FEATURES, N_TIMEPOINTS, TIMEPOINTS, ClassLabel, GaitCycle, Waveform
from gaitbench.exceptions import ChannelError, DatasetError, SplineError

MIN_SPLINE_SAMPLES = 4
SD_EPSILON = 1e-12

FeatureVector = np.ndarray


@dataclass(frozen=True)
class RawCycle:
    """One segmented cycle with an arbitrary (uniform) number of samples per channel."""

    subject_id: str
    label: ClassLabel
    cycle_index: int
    channels: Mapping

    def __post_init__(self) -> None:
        """Freeze the channel map."""
        frozen = {channel: tuple(float(value) for value in values) for channel, values in self.channels.items()}
        object.__setattr__(self, 'channels', MappingProxyType(frozen))


def spline_resample(samples: Sequence[float], targets: Sequence[float] = TIMEPOINTS) -> Waveform:
    """
    Evaluate the natural cubic spline through uniformly spaced samples at the target percentages.

    Sample i sits at i / (n - 1) * 100 percent of the cycle. Targets that coincide with a sample
    abscissa return that sample unchanged.

    :raises SplineError: on fewer than four samples or non-finite input.
    """
    values = np.asarray(samples, dtype=float)
    if values.ndim != 1 or values.size < MIN_SPLINE_SAMPLES:
        raise SplineError(f'insufficient samples: need at least {MIN_SPLINE_SAMPLES}, got {values.size}')
    if not np.all(np.isfinite(values)):
        raise SplineError('samples must be finite')

    abscissae = np.linspace(0.0, 100.0, values.size)
    targets = np.asarray(targets, dtype=float)
    resampled = CubicSpline(abscissae, values, bc_type='natural')(targets)

    positions = np.searchsorted(abscissae, targets)
    for index, (target, position) in enumerate(zip(targets, positions)):
        if position < values.size and abscissae[position] == target:
            resampled[index] = values[position]
    return tuple(float(value) for value in resampled)


def time_normalize(raw: RawCycle) -> GaitCycle:
    """
    Resample every channel of a raw cycle to 0%, 10%, ..., 100%.

    :raises ChannelError: naming the channel that is missing or cannot be resampled.
    """
    for channel in raw.channels:
        if channel not in CHANNELS:
            raise ChannelError(str(channel), 'unexpected channel')
    lengths = set()
    for channel in CHANNELS:
        if channel not in raw.channels:
            raise ChannelError(channel.name, 'channel missing')
        lengths.add(len(raw.channels[channel]))
    if len(lengths) > 1:
        raise DatasetError(
            f'{raw.subject_id}/{raw.label.value}/{raw.cycle_index}: channels have unequal lengths {sorted(lengths)}'
        )

    channels = {}
    for channel in CHANNELS:
        try:
            channels[channel] = spline_resample(raw.channels[channel])
        except SplineError as exc:
            raise ChannelError(channel.name, str(exc)) from exc
    return GaitCycle(raw.subject_id, raw.label, raw.cycle_index, channels)


def vectorize(cycle: GaitCycle) -> FeatureVector:
    """Flatten a cycle channel-major: CHANNELS order, 11 timepoints each."""
    return np.concatenate([np.asarray(cycle.channels[channel], dtype=float) for channel in CHANNELS])


def vectorize_many(cycles: Iterable[GaitCycle]) -> np.ndarray:
    """Stack cycles into an (n, 143) matrix."""
    rows = [vectorize(cycle) for cycle in cycles]
    if not rows:
        return np.empty((0, N_FEATURES))
    return np.vstack(rows)


def devectorize(
    values: Sequence[float],
    subject_id: str = '',
    label: ClassLabel = ClassLabel.NORMAL,
    cycle_index: int = 0,
) -> GaitCycle:
    """Rebuild a cycle from its 143-value layout."""
    values = np.asarray(values, dtype=float)
    if values.shape != (N_FEATURES,):
        raise DatasetError(f'expected {N_FEATURES} values, got shape {values.shape}')
    channels = {
        channel: values[index * N_TIMEPOINTS:(index + 1) * N_TIMEPOINTS]
        for index, channel in enumerate(CHANNELS)
    }
    return GaitCycle(subject_id, label, cycle_index, channels)


@dataclass(frozen=True)
class Standardizer:
    """Per-dimension mean and population SD fitted on a training split."""

    mean: np.ndarray
    sd: np.ndarray

    def apply(self, values: Union[FeatureVector, np.ndarray]) -> np.ndarray:
        """(v - mean) / sd, for one vector or a matrix of row vectors."""
        return (np.asarray(values, dtype=float) - self.mean) / self.sd


def fit_standardizer(train: Union[Sequence[FeatureVector], np.ndarray]) -> Standardizer:
    """
    Fit per-dimension mean and population SD.

    Dimensions whose SD is below 1e-12 keep SD = 1 so they pass through centered but unscaled.

    :raises DatasetError: on an empty training set.
    """
    matrix = np.asarray(train, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] == 0:
        raise DatasetError('cannot fit a standardizer on an empty training set')
    mean = matrix.mean(axis=0)
    sd = matrix.std(axis=0)
    sd = np.where(sd < SD_EPSILON, 1.0, sd)
    return Standardizer(mean=mean, sd=sd)


def apply(standardizer: Standardizer, vector: FeatureVector) -> np.ndarray:
    """Standardize a vector (or rows of a matrix)."""
    return standardizer.apply(vector)


def is_time_normalized(channels: Mapping) -> bool:
    """True when every channel already has one value per target timepoint."""
    return all(len(values) == N_TIMEPOINTS for values in channels.values())


def finite(values: Iterable[float]) -> bool:
    """True when all values are finite numbers."""
    return all(
        isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value) for value in values
    )
