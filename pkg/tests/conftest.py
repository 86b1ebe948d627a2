import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from arcforge.conllu import build_vocab  # noqa: E402
from toygrammar import make_corpus  # noqa: E402


@pytest.fixture(scope="session")
def toy_corpus():
    train, dev = make_corpus(n_train=32, n_dev=16, seed=11)
    return train, dev


@pytest.fixture(scope="session")
def toy_vocab(toy_corpus):
    return build_vocab(toy_corpus[0], min_count=1)
