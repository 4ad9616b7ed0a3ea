import numpy as np
import pytest

from streamhash.loss import CodePair, LossParams, PairSample, similarity_loss
from streamhash.model import HashModel, encode


def encode_pair(model: HashModel, pair: PairSample) -> CodePair:
    return CodePair(encode(model, pair.x_i), encode(model, pair.x_j))


def random_violating_case(rng, d, r, params: LossParams, s=None):
    """Random (model, pair, h, s) with positive similarity loss."""
    for _ in range(1000):
        model = HashModel(rng.normal(size=(d, r)))
        label = s if s is not None else (1 if rng.random() < 0.5 else -1)
        pair = PairSample(rng.normal(size=d), rng.normal(size=d), label)
        h = encode_pair(model, pair)
        if similarity_loss(h, label, params) > 0:
            return model, pair, h, label
    raise AssertionError("could not draw a violating case")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
