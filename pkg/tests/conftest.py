import pytest
from hypothesis import settings

from hiram.config import TrainConfig
from hiram.corpus import load_corpus
from hiram.synth import SynthSpec, generate_synthetic

settings.register_profile("default", deadline=None)
settings.load_profile("default")

TINY_CONFIG = dict(word_dim=6, pos_dim=2, filters=4, levels=1, type_limit=3, max_distance=10,
                   batch_size=4, epochs=2, lr=1.0, holdout=0.25, dropout=0.5)


@pytest.fixture(scope="session")
def tiny_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny")
    spec = SynthSpec(relations=4, levels=1, train_bags=16, test_bags=8, filler_vocab=20, max_bag_size=3)
    generate_synthetic(spec, 5, out)
    return out


@pytest.fixture()
def tiny_corpus(tiny_dir):
    return load_corpus(tiny_dir, levels=1, type_limit=3, min_freq=1)


@pytest.fixture()
def tiny_config():
    return TrainConfig(**TINY_CONFIG).validate()
