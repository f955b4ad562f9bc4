import numpy as np
import pytest

from fedmail.engine import FLConfig, run_centralized
from fedmail.ingest import clean_text, tokenize_corpus
from fedmail.stopwords import STOP_WORDS
from fedmail.synthetic import (
    GenSpec,
    LEGIT_CUES,
    PHISH_CUES,
    SourceCount,
    balanced_spec,
    gen_synthetic,
)


def test_deterministic_generation():
    spec = balanced_spec(50, signal=0.7)
    a = gen_synthetic(spec, seed=11)
    b = gen_synthetic(spec, seed=11)
    assert a == b
    c = gen_synthetic(spec, seed=12)
    assert a != c


def test_output_is_already_clean():
    for s in gen_synthetic(balanced_spec(40), seed=3):
        assert clean_text(s.body) == s.body
        assert clean_text(s.header_subject) == s.header_subject


def test_cue_words_disjoint_from_stopwords():
    assert not (set(PHISH_CUES) | set(LEGIT_CUES)) & STOP_WORDS
    assert not set(PHISH_CUES) & set(LEGIT_CUES)


def test_table1_shaped_counts():
    spec = GenSpec(
        counts=(
            SourceCount("IWSPA", 1132, 9174),
            SourceCount("Enron", 0, 4279),
            SourceCount("Nazario", 8890, 0),
            SourceCount("CSIROLike", 309, 0),
            SourceCount("PhishbowlLike", 132, 0),
        )
    )
    samples = gen_synthetic(spec, seed=123)
    assert len(samples) == 23916
    per = {}
    for s in samples:
        per.setdefault(s.source, [0, 0])[0 if s.label == "phishing" else 1] += 1
    assert per["IWSPA"] == [1132, 9174]
    assert per["Nazario"] == [8890, 0]
    assert per["Enron"] == [0, 4279]
    assert per["CSIROLike"] == [309, 0]
    assert per["PhishbowlLike"] == [132, 0]


def test_headerless_sources_have_no_header():
    spec = GenSpec(counts=(SourceCount("CSIROLike", 5, 0), SourceCount("IWSPA", 5, 0)))
    samples = gen_synthetic(spec, seed=1)
    for s in samples:
        if s.source == "CSIROLike":
            assert not s.has_header and s.header_subject == ""
        else:
            assert s.has_header and s.header_subject != ""


def test_degenerate_spec_rejected():
    with pytest.raises(ValueError, match="zero samples"):
        gen_synthetic(GenSpec(counts=(), signal=0.0), seed=0)
    with pytest.raises(ValueError, match="signal"):
        gen_synthetic(GenSpec(counts=(SourceCount("Synthetic", 1, 1),), signal=1.5), seed=0)


def test_full_signal_is_separable():
    samples = gen_synthetic(balanced_spec(400, signal=1.0), seed=5)
    corpus = tokenize_corpus(samples, vocab_dim=1024)
    cfg = FLConfig(num_clients=1, global_epochs=40, learning_rate=0.1, batch_size=128,
                   seed=5, vocab_dim=1024)
    rec = run_centralized(corpus, cfg)
    assert rec.final().global_avg["accuracy"] >= 0.99


def test_zero_signal_is_chance_level():
    samples = gen_synthetic(balanced_spec(1000, signal=0.0), seed=6)
    corpus = tokenize_corpus(samples, vocab_dim=1024)
    cfg = FLConfig(num_clients=1, global_epochs=10, learning_rate=0.05, batch_size=128,
                   seed=6, vocab_dim=1024)
    rec = run_centralized(corpus, cfg)
    assert abs(rec.final().global_avg["accuracy"] - 0.5) <= 0.05
