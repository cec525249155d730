"""Shared fixtures: generated cohorts are reused across test modules."""
import pytest

from gaitbench.domain import GeneratorConfig, generate_dataset


@pytest.fixture(scope='session')
def default_dataset():
    """The default 20 x 7 x 3 cohort (seed 42)."""
    return generate_dataset(GeneratorConfig())


@pytest.fixture(scope='session')
def small_dataset():
    """Four subjects, two cycles per class."""
    return generate_dataset(GeneratorConfig(n_subjects=4, cycles_per_class=2, rng_seed=7))


@pytest.fixture(scope='session')
def clean_dataset():
    """One subject, no noise and no subject variation: every cycle is its class template."""
    return generate_dataset(GeneratorConfig(
        n_subjects=1, cycles_per_class=1, rng_seed=0, noise_sd_deg=0.0, subject_variation_sd_deg=0.0,
    ))
