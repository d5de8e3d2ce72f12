from dataclasses import replace

import pytest

from placebg.benchmark import detection_spec, growth_spec, standard_recursion_config
from placebg.data_io import generate_synthetic
from placebg.rae import link_pairs, recursive_train


@pytest.fixture(scope="session")
def growth_run():
    """Three-mode 32x32 corpus (seed 0) and its trained AE set."""
    pairs, _, labels = generate_synthetic(growth_spec(0))
    images = [p.background for p in pairs]
    return images, labels, recursive_train(images, standard_recursion_config(0))


@pytest.fixture(scope="session")
def two_mode_run():
    """Two-mode 160x160 corpus without objects (seed 1), linked to its trained AE set."""
    pairs, _, labels = generate_synthetic(replace(detection_spec(1), n_modes=2, anomaly_count=0))
    aeset = recursive_train([p.background for p in pairs], standard_recursion_config(1))
    link_pairs(aeset, pairs)
    return pairs, labels, aeset
