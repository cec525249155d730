"""Tests for the trial and reference payloads."""
import json

import numpy as np
import pytest
from ddt import data, ddt, unpack
from django.test import SimpleTestCase

from gaitbench.domain import CHANNELS, ClassLabel, Dataset, GaitCycle, GeneratorConfig, generate_dataset
from gaitbench.encoding import (
    build_reference_stats,
    decode_trial,
    encode_trial,
    render_reference,
    round2,
    timepoint_key,
)
from gaitbench.exceptions import DatasetError


@ddt
class TestRound2(SimpleTestCase):
    """Half away from zero at two decimals."""

    @data(
        (3.14159, 3.14),
        (-0.005, -0.01),
        (0.005, 0.01),
        (0.125, 0.13),
        (2.675, 2.68),
        (-2.675, -2.68),
        (10.0, 10.0),
        (-0.001, 0.0),
    )
    @unpack
    def test_round2(self, value, expected):
        assert round2(value) == expected

    def test_negative_zero_is_serialized_unsigned(self):
        assert json.dumps(round2(-0.001)) == '0.0'


def test_trial_payload_layout(small_dataset):
    cycle = small_dataset.cycles[0]
    text = encode_trial(cycle)
    assert text.startswith('{"pelvis_tilt":{"center":{"t0":')
    payload = json.loads(text)
    assert list(payload) == [
        'pelvis_tilt', 'pelvis_obliquity', 'pelvis_rotation', 'hip_flexion', 'hip_adduction',
        'hip_rotation', 'knee_flexion', 'ankle_dorsiflexion',
    ]
    assert list(payload['knee_flexion']) == ['left', 'right']
    assert list(payload['knee_flexion']['left']) == [timepoint_key(t) for t in range(0, 101, 10)]


def test_trial_payload_decodes_to_rounded_values(small_dataset):
    cycle = small_dataset.cycles[5]
    decoded = decode_trial(encode_trial(cycle))
    for channel in CHANNELS:
        assert decoded[channel] == tuple(round2(value) for value in cycle.channels[channel])


def test_decode_rejects_incomplete_payload():
    with pytest.raises(DatasetError):
        decode_trial('{"pelvis_tilt": {}}')
    with pytest.raises(DatasetError):
        decode_trial('not json')


def shifted(cycle, offset):
    channels = {channel: tuple(value + offset for value in values) for channel, values in cycle.channels.items()}
    return GaitCycle(cycle.subject_id, cycle.label, cycle.cycle_index, channels)


@pytest.mark.parametrize('offset', [1000.0, -1000.0])
def test_excluded_subject_does_not_move_the_reference(small_dataset, offset):
    excluded = small_dataset.subjects[0]
    perturbed = Dataset(tuple(
        shifted(cycle, offset) if cycle.subject_id == excluded else cycle for cycle in small_dataset
    ))
    original = render_reference(build_reference_stats(small_dataset, excluded))
    assert render_reference(build_reference_stats(perturbed, excluded)) == original
    other = small_dataset.subjects[1]
    assert render_reference(build_reference_stats(perturbed, other)) != render_reference(
        build_reference_stats(small_dataset, other)
    )


def test_reference_statistics(small_dataset):
    excluded = small_dataset.subjects[0]
    stats = build_reference_stats(small_dataset, excluded)
    normal = [
        cycle for cycle in small_dataset
        if cycle.label == ClassLabel.NORMAL and cycle.subject_id != excluded
    ]
    assert stats.n_cycles == len(normal) == 6
    assert stats.n_subjects == 3
    knee = CHANNELS[9]
    values = np.array([cycle.channels[knee][3] for cycle in normal])
    cell = stats.cell(knee, 30)
    assert cell['mean'] == pytest.approx(values.mean())
    assert cell['sd'] == pytest.approx(values.std())
    assert cell['p5'] == pytest.approx(np.percentile(values, 5))
    assert cell['p5'] <= cell['mean'] <= cell['p95']


def test_reference_payload_layout(small_dataset):
    payload = json.loads(render_reference(build_reference_stats(small_dataset, 'S01')))
    leaf = payload['hip_rotation']['right']['t50']
    assert list(leaf) == ['mean', 'sd', 'p5', 'p95']
    assert all(round2(value) == value for value in leaf.values())


def test_reference_needs_two_other_subjects():
    dataset = generate_dataset(GeneratorConfig(n_subjects=2, cycles_per_class=1, rng_seed=1))
    with pytest.raises(DatasetError) as error:
        build_reference_stats(dataset, 'S01')
    assert 'insufficient reference subjects' in str(error.value)
