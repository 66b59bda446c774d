import hashlib
import random

import pytest

from tfv.digest import HashAlgorithm


def leaf_digests(count, seed=0, alg=HashAlgorithm.SHA1):
    rng = random.Random(seed)
    return [rng.randbytes(alg.output_length) for _ in range(count)]


def named(*names):
    return [hashlib.sha1(n.encode()).digest() for n in names]


@pytest.fixture
def rng():
    return random.Random(1234)
