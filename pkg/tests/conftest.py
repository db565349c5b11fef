# tests/conftest.py

import logging

import pytest

from ccrec.config import GenConfig, ModelConfig, TrainConfig
from ccrec.dataset import ChannelLabel, InteractionStore, Vocab, sample_negatives, split
from ccrec.synthgen import generate

OFF, ON = ChannelLabel.OFF, ChannelLabel.ON


@pytest.fixture(autouse=True)
def quiet_ccrec_logger():
    """Keep library logging out of the test output unless a test raises it."""
    logger = logging.getLogger("ccrec")
    previous = logger.level
    logger.setLevel(logging.ERROR)
    yield
    logger.setLevel(previous)


def make_store(rows):
    """Store from (raw_user, raw_item, channel) rows, ids in first-seen order."""
    users, items = {}, {}
    triples = []
    for user, item, channel in rows:
        u = users.setdefault(user, len(users))
        v = items.setdefault(item, len(items))
        triples.append((u, v, channel))
    vocab = Vocab(tuple(users), tuple(items))
    return InteractionStore.from_triples(triples, vocab)


@pytest.fixture
def small_gen_config():
    return GenConfig(
        n_users=40,
        n_items=30,
        latent_dim=4,
        gamma=1.0,
        interactions_per_user_channel=(5, 8),
        seed=0,
    )


@pytest.fixture
def synthetic(small_gen_config):
    """(store, ground truth) of a small generated dataset."""
    return generate(small_gen_config)


@pytest.fixture
def small_store(synthetic):
    return synthetic[0]


@pytest.fixture
def small_bundle(small_store):
    """Seed-0 split of the small store with two negatives per positive."""
    return sample_negatives(split(small_store, seed=0), small_store, per_positive=2, seed=0)


@pytest.fixture
def tiny_model_config():
    return ModelConfig(d=8, d_prime=4, clf_hidden=8, lambda_cls=0.1, lambda_attn=0.1)


@pytest.fixture
def fast_train_config():
    return TrainConfig(epochs=3, batch_size=64, learning_rate=5e-3, patience=5, seed=0)


@pytest.fixture
def interactions_csv(tmp_path):
    """A hand-written interactions file: 3 users, 4 items, both channels."""
    path = tmp_path / "interactions.csv"
    path.write_text(
        "user_id,item_id,channel\n"
        "alice,apple,off\n"
        "alice,apple,on\n"
        "alice,bread,off\n"
        "bob,bread,on\n"
        "carol,cheese,off\n"
        "carol,dates,OFF\n",
        encoding="utf-8",
    )
    return path
