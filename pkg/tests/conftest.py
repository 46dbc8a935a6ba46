import numpy as np
import pytest

from xmhash.data import make_instance


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def inst(id, labels, d_v=2, d_t=2, fill=0.0):
    return make_instance(id, np.full(d_v, fill), np.full(d_t, fill), labels)


@pytest.fixture
def make_inst():
    return inst
