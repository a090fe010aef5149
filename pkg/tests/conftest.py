"""Shared fixtures: one small synthetic dataset per session.

Two objects at full repetition count keep generation around twenty
seconds while still exercising the 6:2:2 split, both object shapes and
every (tool, action) pair.
"""

import pytest

from toolact.data import SplitSpec, compute_norm_stats, split_dataset
from toolact.synth import generate_synthetic_dataset


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("smallset")
    return generate_synthetic_dataset(root, objects=2, repetitions=10, seed=0)


@pytest.fixture(scope="session")
def small_splits(small_dataset):
    train, val, test = split_dataset(small_dataset, SplitSpec(seed=0))
    stats = compute_norm_stats(train)
    return train, val, test, stats
