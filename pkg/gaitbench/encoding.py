"""
Hierarchical JSON payloads for the LLM: trial data and NORMAL reference statistics.

Both payloads are indexed feature -> side -> timepoint (``t0`` ... ``t100``), in canonical channel
order, with values rounded half away from zero to two decimals.
"""

import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Any, Callable, Dict, Iterable

import numpy as np

from gaitbench.domain import CHANNELS, TIMEPOINTS, ChannelId, ClassLabel, GaitCycle
from gaitbench.exceptions import DatasetError

STAT_NAMES = ('mean', 'sd', 'p5', 'p95')
MIN_REFERENCE_SUBJECTS = 2


def round2(value: float) -> float:
    """Round half away from zero to two decimals (3.14159 -> 3.14, -0.005 -> -0.01)."""
    rounded = float(Decimal(repr(float(value))).quantize(Decimal('0.01'), rounding=ROUND_HALF_UP))
    # Adding 0.0 turns -0.0 into 0.0.
    return rounded + 0.0


def timepoint_key(timepoint: int) -> str:
    """'t50' for 50 percent of the cycle."""
    return f't{timepoint}'


def _hierarchy(leaf: Callable[[ChannelId, int], Any]) -> Dict[str, Dict[str, Dict[str, Any]]]:
    payload: Dict[str, Dict[str, Dict[str, Any]]] = {}
    for channel in CHANNELS:
        payload.setdefault(channel.feature.value, {})[channel.side.value] = {
            timepoint_key(timepoint): leaf(channel, position) for position, timepoint in enumerate(TIMEPOINTS)
        }
    return payload


def _dumps(payload: Any) -> str:
    return json.dumps(payload, separators=(',', ':'), ensure_ascii=False)


def encode_trial(cycle: GaitCycle) -> str:
    """Trial JSON, e.g. {"pelvis_tilt":{"center":{"t0":10.12,...}},"hip_flexion":{"left":{...},...},...}."""
    return _dumps(_hierarchy(lambda channel, position: round2(cycle.channels[channel][position])))


def decode_trial(text: str) -> Dict[ChannelId, tuple]:
    """
    Read a trial payload back into channel waveforms.

    :raises DatasetError: when the text is not a complete trial payload.
    """
    try:
        payload = json.loads(text)
    except ValueError as exc:
        raise DatasetError(f'Trial payload is not JSON: {exc}') from exc
    return decode_trial_payload(payload)


def decode_trial_payload(payload: Any) -> Dict[ChannelId, tuple]:
    """Channel waveforms from an already-parsed trial payload."""
    channels = {}
    try:
        for channel in CHANNELS:
            leaves = payload[channel.feature.value][channel.side.value]
            channels[channel] = tuple(float(leaves[timepoint_key(timepoint)]) for timepoint in TIMEPOINTS)
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f'Trial payload is incomplete: {exc!r}') from exc
    return channels


@dataclass(frozen=True)
class ReferenceStats:
    """
    NORMAL-class statistics per channel and timepoint, built without one subject.

    Arrays are indexed [channel position in CHANNELS, timepoint position].
    """

    excluded_subject: str
    mean: np.ndarray
    sd: np.ndarray
    p5: np.ndarray
    p95: np.ndarray
    n_cycles: int
    n_subjects: int

    def cell(self, channel: ChannelId, timepoint: int) -> Dict[str, float]:
        """Unrounded statistics of one channel at one timepoint."""
        row = CHANNELS.index(channel)
        column = TIMEPOINTS.index(timepoint)
        return {name: float(getattr(self, name)[row, column]) for name in STAT_NAMES}


def build_reference_stats(cycles: Iterable[GaitCycle], excluded_subject: str) -> ReferenceStats:
    """
    Mean, population SD and 5th/95th percentiles (linear interpolation) of every NORMAL cycle
    not recorded from ``excluded_subject``.

    :raises DatasetError: when fewer than two other subjects contribute NORMAL cycles.
    """
    normal = [
        cycle for cycle in cycles
        if cycle.label == ClassLabel.NORMAL and cycle.subject_id != excluded_subject
    ]
    subjects = {cycle.subject_id for cycle in normal}
    if len(subjects) < MIN_REFERENCE_SUBJECTS:
        raise DatasetError(
            f'insufficient reference subjects: need NORMAL cycles from at least {MIN_REFERENCE_SUBJECTS} '
            f'subjects other than {excluded_subject}, got {len(subjects)}'
        )
    stack = np.array([[cycle.channels[channel] for channel in CHANNELS] for cycle in normal], dtype=float)
    return ReferenceStats(
        excluded_subject=excluded_subject,
        mean=stack.mean(axis=0),
        sd=stack.std(axis=0),
        p5=np.percentile(stack, 5, axis=0, method='linear'),
        p95=np.percentile(stack, 95, axis=0, method='linear'),
        n_cycles=len(normal),
        n_subjects=len(subjects),
    )


def render_reference(stats: ReferenceStats) -> str:
    """Reference JSON mirroring the trial hierarchy with {"mean","sd","p5","p95"} leaves."""
    def leaf(channel: ChannelId, position: int) -> Dict[str, float]:
        row = CHANNELS.index(channel)
        return {name: round2(getattr(stats, name)[row, position]) for name in STAT_NAMES}

    return _dumps(_hierarchy(leaf))
