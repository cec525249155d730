"""
Gait data types and the synthetic seven-class gait generator.
"""

import logging
import math
import os
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from types import MappingProxyType
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import yaml

from gaitbench.exceptions import ConfigError
from gaitbench.helpers import check_known_fields, get_choice, get_float, get_int

logger = logging.getLogger(__name__)

TIMEPOINTS = tuple(range(0, 101, 10))
N_TIMEPOINTS = len(TIMEPOINTS)
TEMPLATES_PATH = os.path.join(os.path.dirname(__file__), 'data', 'normal_templates.yaml')

# Samples in half a (periodic) cycle on the 11-point grid.
HALF_CYCLE_SHIFT = 5

Waveform = Tuple[float, ...]


class ClassLabel(Enum):
    NORMAL = 'NORMAL'
    BOUNCY = 'BOUNCY'
    STIFF = 'STIFF'
    LIMB_ABDUCTION = 'LIMB_ABDUCTION'
    CROUCHED = 'CROUCHED'
    INWARD_FOOT = 'INWARD_FOOT'
    OUTWARD_FOOT = 'OUTWARD_FOOT'

    @classmethod
    def parse(cls, value: str) -> 'ClassLabel':
        """Parse the canonical upper-snake form, case-sensitively."""
        if not isinstance(value, str) or value not in cls.__members__:
            raise ValueError(f'Unknown gait class: {value!r}')
        return cls[value]

    @property
    def order(self) -> int:
        """Position in the canonical label order."""
        return CLASS_ORDER[self]


CLASS_ORDER = {label: index for index, label in enumerate(ClassLabel)}
UNILATERAL_CLASSES = frozenset({ClassLabel.LIMB_ABDUCTION, ClassLabel.INWARD_FOOT, ClassLabel.OUTWARD_FOOT})


class BinaryLabel(Enum):
    NORMAL = 'NORMAL'
    NOT_NORMAL = 'NOT_NORMAL'


def project_binary(label: ClassLabel) -> BinaryLabel:
    """Collapse the seven classes to NORMAL vs NOT_NORMAL."""
    return BinaryLabel.NORMAL if label == ClassLabel.NORMAL else BinaryLabel.NOT_NORMAL


class Confidence(Enum):
    HIGH = 'high'
    MEDIUM = 'medium'
    LOW = 'low'


class Feature(Enum):
    PELVIS_TILT = 'pelvis_tilt'
    PELVIS_OBLIQUITY = 'pelvis_obliquity'
    PELVIS_ROTATION = 'pelvis_rotation'
    HIP_FLEXION = 'hip_flexion'
    HIP_ADDUCTION = 'hip_adduction'
    HIP_ROTATION = 'hip_rotation'
    KNEE_FLEXION = 'knee_flexion'
    ANKLE_DORSIFLEXION = 'ankle_dorsiflexion'

    @property
    def is_pelvis(self) -> bool:
        """Pelvis features are measured once, at the center."""
        return self.value.startswith('pelvis_')


class Side(Enum):
    LEFT = 'left'
    RIGHT = 'right'
    CENTER = 'center'


@dataclass(frozen=True)
class ChannelId:
    """One kinematic channel: a feature measured on one side."""

    feature: Feature
    side: Side

    def __post_init__(self) -> None:
        """Enforce the pelvis/center pairing."""
        if self.feature.is_pelvis != (self.side == Side.CENTER):
            raise ValueError(f'Invalid channel: {self.feature.value} cannot be measured on side {self.side.value}')

    @property
    def name(self) -> str:
        """Readable name such as ``knee_flexion_right``."""
        return f'{self.feature.value}_{self.side.value}'

    def __str__(self) -> str:
        """Return the readable name."""
        return self.name


def _canonical_channels() -> Tuple[ChannelId, ...]:
    channels = []
    for feature in Feature:
        if feature.is_pelvis:
            channels.append(ChannelId(feature, Side.CENTER))
        else:
            channels.extend([ChannelId(feature, Side.LEFT), ChannelId(feature, Side.RIGHT)])
    return tuple(channels)


# pelvis_tilt, pelvis_obliquity, pelvis_rotation, then each bilateral feature left then right.
CHANNELS = _canonical_channels()
CHANNEL_INDEX = {channel: index for index, channel in enumerate(CHANNELS)}
N_FEATURES = len(CHANNELS) * N_TIMEPOINTS


@dataclass(frozen=True)
class GaitCycle:
    """One time-normalized gait cycle."""

    subject_id: str
    label: ClassLabel
    cycle_index: int
    channels: Mapping[ChannelId, Waveform]

    def __post_init__(self) -> None:
        """Freeze the channel map."""
        frozen = {channel: tuple(float(value) for value in values) for channel, values in self.channels.items()}
        object.__setattr__(self, 'channels', MappingProxyType(frozen))

    @property
    def key(self) -> Tuple[str, ClassLabel, int]:
        """(subject, label, cycle index) identity."""
        return (self.subject_id, self.label, self.cycle_index)

    def sort_key(self) -> Tuple[str, int, int]:
        """Order by subject, canonical label, cycle index."""
        return (self.subject_id, self.label.order, self.cycle_index)


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of labeled gait cycles."""

    cycles: Tuple[GaitCycle, ...]

    def __post_init__(self) -> None:
        """Store cycles as a tuple."""
        object.__setattr__(self, 'cycles', tuple(self.cycles))

    def __len__(self) -> int:
        """Number of cycles."""
        return len(self.cycles)

    def __iter__(self):
        """Iterate over cycles."""
        return iter(self.cycles)

    @property
    def subjects(self) -> Tuple[str, ...]:
        """Sorted distinct subject ids."""
        return tuple(sorted({cycle.subject_id for cycle in self.cycles}))

    def for_subjects(self, subjects: Iterable[str]) -> 'Dataset':
        """Cycles of the given subjects only."""
        wanted = set(subjects)
        return Dataset(tuple(cycle for cycle in self.cycles if cycle.subject_id in wanted))

    def without_subject(self, subject_id: str) -> 'Dataset':
        """Cycles of every subject except one."""
        return Dataset(tuple(cycle for cycle in self.cycles if cycle.subject_id != subject_id))

    def with_label(self, label: ClassLabel) -> 'Dataset':
        """Cycles of one class."""
        return Dataset(tuple(cycle for cycle in self.cycles if cycle.label == label))


@dataclass(frozen=True)
class GeneratorConfig:
    """Synthetic cohort parameters."""

    n_subjects: int = 20
    cycles_per_class: int = 3
    rng_seed: int = 42
    noise_sd_deg: float = 1.0
    subject_variation_sd_deg: float = 1.5
    class_effect_scale: float = 1.0
    rng_algorithm: str = 'PCG64'

    FIELDS = ('n_subjects', 'cycles_per_class', 'rng_seed', 'noise_sd_deg',
              'subject_variation_sd_deg', 'class_effect_scale', 'rng_algorithm')
    RNG_ALGORITHMS = ('PCG64',)

    def __post_init__(self) -> None:
        """Validate every field."""
        self._parse(self.to_dict())

    @classmethod
    def _parse(cls, data: Mapping[str, Any]) -> Dict[str, Any]:
        check_known_fields(data, cls.FIELDS)
        values = {
            'n_subjects': get_int(data, 'n_subjects', 20, minimum=1),
            'cycles_per_class': get_int(data, 'cycles_per_class', 3, minimum=1),
            'rng_seed': get_int(data, 'rng_seed', 42),
            'noise_sd_deg': get_float(data, 'noise_sd_deg', 1.0, minimum=0.0),
            'subject_variation_sd_deg': get_float(data, 'subject_variation_sd_deg', 1.5, minimum=0.0),
            'class_effect_scale': get_float(data, 'class_effect_scale', 1.0, minimum=0.0),
            'rng_algorithm': get_choice(data, 'rng_algorithm', 'PCG64', cls.RNG_ALGORITHMS),
        }
        if not -2 ** 63 <= values['rng_seed'] < 2 ** 64:
            raise ConfigError('rng_seed', 'must fit in 64 bits')
        return values

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'GeneratorConfig':
        """
        Build a config from a mapping; missing fields take their defaults.

        :raises ConfigError: naming the first invalid field.
        """
        return cls(**cls._parse(data))

    def to_dict(self) -> Dict[str, Any]:
        """Plain mapping, suitable for YAML/JSON."""
        return {name: getattr(self, name) for name in self.FIELDS}

    def make_rng(self) -> np.random.Generator:
        """The documented deterministic generator for this config."""
        # Negative seeds are folded into the unsigned 64-bit range.
        return np.random.Generator(np.random.PCG64(self.rng_seed % 2 ** 64))


@dataclass(frozen=True)
class Violation:
    kind: str
    subject_id: Any
    label: Any
    cycle_index: Any
    channel: Optional[str] = None
    timepoint: Optional[int] = None
    message: str = ''


@dataclass(frozen=True)
class ValidationReport:
    violations: Tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def is_valid(self) -> bool:
        """True when no invariant is violated."""
        return not self.violations

    def __len__(self) -> int:
        """Number of violations."""
        return len(self.violations)


@lru_cache(maxsize=1)
def _load_templates() -> Dict[str, Tuple[float, ...]]:
    with open(TEMPLATES_PATH, encoding='utf8') as templates_file:
        raw = yaml.safe_load(templates_file)
    templates = {}
    for feature in Feature:
        values = tuple(float(value) for value in raw[feature.value])
        if len(values) != N_TIMEPOINTS:
            raise ValueError(f'Template {feature.value} must have {N_TIMEPOINTS} values')
        templates[feature.value] = values
    return templates


def shift_half_cycle(values: Sequence[float]) -> np.ndarray:
    """Shift a periodic 11-point waveform by 50% of the cycle."""
    values = np.asarray(values, dtype=float)
    period = values[:-1]
    shifted = np.roll(period, -HALF_CYCLE_SHIFT)
    return np.append(shifted, shifted[0])


def normal_template(channel: ChannelId) -> Waveform:
    """
    NORMAL-class base curve for a channel.

    Right and center channels use the stored curve, so the cycle starts at right initial
    contact; left channels use it shifted by half a cycle.
    """
    curve = _load_templates()[channel.feature.value]
    if channel.side == Side.LEFT:
        return tuple(float(value) for value in shift_half_cycle(curve))
    return curve


def _phase(values: Sequence[float], side: Side) -> np.ndarray:
    """Express a right-phase pattern in the phase of the given side."""
    values = np.asarray(values, dtype=float)
    return shift_half_cycle(values) if side == Side.LEFT else values


# Nominal effect sizes, degrees, scaled by class_effect_scale.
BOUNCY_KNEE_PATTERN = (0.0, 8.0, 15.0, 12.0, 3.0, -10.0, 0.0, 0.0, 0.0, 0.0, 0.0)
STIFF_KNEE_CAP = 15.0
CROUCHED_KNEE_OFFSET = 40.0
CROUCHED_HIP_OFFSET = 30.0
ROTATION_SHIFT = 20.0
SWING_ABDUCTION = 15.0
# Right-limb swing: toe-off near 60%, next initial contact at 100%.
SWING_MASK = np.array([1.0 if 60 <= timepoint < 100 else 0.0 for timepoint in TIMEPOINTS])


def _class_delta(channel: ChannelId, base: np.ndarray, label: ClassLabel) -> Optional[np.ndarray]:
    """Nominal deviation of one channel from its base for a class, or None when untouched."""
    feature, side = channel.feature, channel.side
    bilateral = side in (Side.LEFT, Side.RIGHT)

    if label == ClassLabel.BOUNCY and feature == Feature.KNEE_FLEXION and bilateral:
        return _phase(BOUNCY_KNEE_PATTERN, side)
    if label == ClassLabel.STIFF and feature == Feature.KNEE_FLEXION and bilateral:
        peak = float(np.max(base))
        if peak <= STIFF_KNEE_CAP:
            return None
        # Compress toward 0 so the swing peak lands on the cap.
        return base * (STIFF_KNEE_CAP / peak) - base
    if label == ClassLabel.CROUCHED and bilateral:
        if feature == Feature.KNEE_FLEXION:
            return np.full(N_TIMEPOINTS, CROUCHED_KNEE_OFFSET)
        if feature == Feature.HIP_FLEXION:
            return np.full(N_TIMEPOINTS, CROUCHED_HIP_OFFSET)
    if label in UNILATERAL_CLASSES and side != Side.RIGHT:
        return None
    if label == ClassLabel.LIMB_ABDUCTION:
        if feature == Feature.HIP_ADDUCTION:
            return _phase(SWING_MASK, side) * SWING_ABDUCTION
        if feature == Feature.HIP_ROTATION:
            return np.full(N_TIMEPOINTS, ROTATION_SHIFT)
    if label == ClassLabel.INWARD_FOOT and feature == Feature.HIP_ROTATION:
        return np.full(N_TIMEPOINTS, -ROTATION_SHIFT)
    if label == ClassLabel.OUTWARD_FOOT and feature == Feature.HIP_ROTATION:
        return np.full(N_TIMEPOINTS, ROTATION_SHIFT)
    return None


def smooth_noise(rng: np.random.Generator, noise_sd_deg: float) -> np.ndarray:
    """Gaussian noise on 11 points, smoothed by a 3-point moving average (edges replicated)."""
    raw = rng.normal(0.0, noise_sd_deg, size=N_TIMEPOINTS)
    padded = np.pad(raw, 1, mode='edge')
    return (padded[:-2] + padded[1:-1] + padded[2:]) / 3.0


def apply_class_transform(
    base: Mapping[ChannelId, Sequence[float]],
    label: ClassLabel,
    rng: np.random.Generator,
    noise_sd_deg: float = 0.0,
    effect_scale: float = 1.0,
) -> Dict[ChannelId, Waveform]:
    """
    Impose a class signature on a subject's NORMAL curves and add smooth noise.

    Noise is drawn for every channel in canonical order whatever the label, so the RNG stream
    does not depend on the class.
    """
    missing = [channel.name for channel in CHANNELS if channel not in base]
    if missing:
        raise ValueError(f'Base curves missing channels: {", ".join(missing)}')

    result = {}
    for channel in CHANNELS:
        values = np.asarray(base[channel], dtype=float)
        delta = _class_delta(channel, values, label)
        if delta is not None:
            values = values + effect_scale * delta
        noise = smooth_noise(rng, noise_sd_deg)
        if noise_sd_deg > 0:
            values = values + noise
        result[channel] = tuple(float(value) for value in values)
    return result


def subject_base(rng: np.random.Generator, variation_sd_deg: float) -> Dict[ChannelId, np.ndarray]:
    """
    NORMAL curves of one synthetic subject.

    Each channel gets an offset and a range-of-motion change, both Gaussian in degrees.
    """
    base = {}
    for channel in CHANNELS:
        template = np.asarray(normal_template(channel), dtype=float)
        offset, amplitude = rng.normal(0.0, variation_sd_deg, size=2)
        centered = template - template.mean()
        span = float(np.ptp(template)) or 1.0
        base[channel] = template + offset + amplitude * centered / span
    return base


def subject_ids(n_subjects: int) -> List[str]:
    """Zero-padded ids S01, S02, ..."""
    width = max(2, len(str(n_subjects)))
    return [f'S{number:0{width}d}' for number in range(1, n_subjects + 1)]


def generate_dataset(config: GeneratorConfig) -> Dataset:
    """
    Generate n_subjects x 7 x cycles_per_class labeled cycles.

    Stream order: per subject, the subject's variation draws, then every class in canonical
    order, then every cycle.
    """
    rng = config.make_rng()
    cycles = []
    for subject_id in subject_ids(config.n_subjects):
        base = subject_base(rng, config.subject_variation_sd_deg)
        for label in ClassLabel:
            for cycle_index in range(config.cycles_per_class):
                channels = apply_class_transform(
                    base, label, rng, noise_sd_deg=config.noise_sd_deg, effect_scale=config.class_effect_scale,
                )
                cycles.append(GaitCycle(subject_id, label, cycle_index, channels))
    logger.info(
        'Generated %d cycles for %d subjects (seed %d).', len(cycles), config.n_subjects, config.rng_seed,
    )
    return Dataset(tuple(cycles))


def validate_dataset(dataset: Dataset) -> ValidationReport:
    """List every GaitCycle/Dataset invariant violation. Never raises."""
    violations = []
    seen = set()
    for cycle in dataset.cycles:
        ids = (cycle.subject_id, getattr(cycle.label, 'value', cycle.label), cycle.cycle_index)
        if not isinstance(cycle.label, ClassLabel):
            violations.append(Violation('bad-label', *ids, message=f'unknown label {cycle.label!r}'))
        if not isinstance(cycle.cycle_index, int) or cycle.cycle_index < 0:
            violations.append(Violation('bad-cycle-index', *ids, message='cycle index must be a non-negative integer'))
        if cycle.key in seen:
            violations.append(Violation('duplicate-key', *ids, message='duplicate (subject, label, cycle) key'))
        seen.add(cycle.key)

        for channel in CHANNELS:
            if channel not in cycle.channels:
                violations.append(Violation('missing-channel', *ids, channel=channel.name, message='channel missing'))
                continue
            values = cycle.channels[channel]
            if len(values) != N_TIMEPOINTS:
                violations.append(Violation(
                    'bad-length', *ids, channel=channel.name,
                    message=f'expected {N_TIMEPOINTS} values, got {len(values)}',
                ))
            for timepoint, value in zip(TIMEPOINTS, values):
                if not math.isfinite(value):
                    violations.append(Violation(
                        'non-finite', *ids, channel=channel.name, timepoint=timepoint, message=f'value {value}',
                    ))
        for channel in cycle.channels:
            if channel not in CHANNEL_INDEX:
                violations.append(Violation('extra-channel', *ids, channel=str(channel), message='unexpected channel'))
    return ValidationReport(tuple(violations))


def class_channel_means(dataset: Dataset, label: ClassLabel) -> Dict[ChannelId, float]:
    """Mean value of each channel over all cycles (and timepoints) of a class."""
    cycles = dataset.with_label(label).cycles
    return {
        channel: float(np.mean([cycle.channels[channel] for cycle in cycles]))
        for channel in CHANNELS
    }
