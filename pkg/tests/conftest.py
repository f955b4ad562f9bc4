import json
from pathlib import Path

import pytest

from fedmail.ingest import tokenize_corpus
from fedmail.synthetic import balanced_spec, gen_synthetic

FIXTURES = Path(__file__).parent / "fixtures" / "corpus"


@pytest.fixture(scope="session")
def fixture_expected():
    return json.loads((FIXTURES / "expected.json").read_text())


@pytest.fixture(scope="session")
def small_corpus():
    """600-sample tokenized corpus with a small hash space, for engine tests."""
    samples = gen_synthetic(balanced_spec(300, signal=0.8), seed=7)
    return tokenize_corpus(samples, vocab_dim=256)


@pytest.fixture(scope="session")
def rq_corpus():
    """The 20,000-sample corpus the RQ presets train on (signal 0.8)."""
    samples = gen_synthetic(balanced_spec(10000, signal=0.8), seed=123)
    return tokenize_corpus(samples)
