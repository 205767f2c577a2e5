import pytest

from tfnet.data import split, synth_generate, synthbearing5


@pytest.fixture(scope="session")
def tiny_dataset():
    """Small five-class synthetic dataset shared by fast tests."""
    return synth_generate(synthbearing5(samples_per_class=12), seed=0)


@pytest.fixture(scope="session")
def tiny_split(tiny_dataset):
    return split(tiny_dataset, train_frac=0.5, seed=0)
