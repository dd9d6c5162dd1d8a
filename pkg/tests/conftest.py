import numpy as np
import pytest

from gwr_hoi.pipeline import ArchitectureConfig, train_architecture
from gwr_hoi.synth import default_spec, synth_generate


@pytest.fixture(scope="session")
def small_dataset():
    spec = default_spec(subjects=3, repetitions=3)
    manifest, records = synth_generate(spec)
    return spec, manifest, records


@pytest.fixture(scope="session")
def small_model(small_dataset):
    _, manifest, records = small_dataset
    train = [r for r in records if r.subject != "s3"]
    return train_architecture(train, ArchitectureConfig(), manifest.n_categories, manifest.n_activities)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
