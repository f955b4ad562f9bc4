"""Synthetic email-like corpus generator (stand-in for private corpora).

Each sample is a subject + body stream of lowercase words: with probability
`signal` a word is drawn from the sample's class-discriminative cue set,
otherwise from a class-neutral filler vocabulary shared by both classes.
signal 1.0 makes the classes trivially separable; signal 0.0 carries no
class information at all. Generation is deterministic in (spec, seed).
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .ingest import LABEL_LEGITIMATE, LABEL_PHISHING, SOURCES, EmailSample
from .stopwords import STOP_WORDS

# Sources whose real-world counterparts ship without headers.
HEADERLESS_SOURCES = frozenset({"CSIROLike", "PhishbowlLike"})

PHISH_CUES = (
    "account", "verify", "password", "click", "urgent", "paypal", "bank",
    "security", "update", "suspended", "confirm", "login", "limited",
    "alert", "invoice", "payment", "refund", "prize", "winner", "claim",
    "access", "unusual", "activity", "locked",
)
LEGIT_CUES = (
    "meeting", "schedule", "report", "team", "project", "review", "lunch",
    "budget", "agenda", "minutes", "draft", "attached", "proposal",
    "quarterly", "feedback", "deadline", "conference", "notes", "summary",
    "travel", "reimbursement", "timesheet", "training", "handbook",
)

_SYLLABLES = (
    "ba", "ce", "di", "fo", "gu", "ha", "ji", "ko", "lu", "ma",
    "ne", "pi", "qo", "ru", "sa", "te", "vi", "wo", "xu", "za",
)


@dataclass(frozen=True)
class SourceCount:
    source: str
    phishing: int
    legitimate: int


@dataclass(frozen=True)
class GenSpec:
    counts: tuple[SourceCount, ...]
    signal: float = 0.8
    filler_vocab: int = 400
    body_words: int = 40
    subject_words: int = 4
    phish_cues: tuple[str, ...] = PHISH_CUES
    legit_cues: tuple[str, ...] = LEGIT_CUES

    def total(self) -> int:
        return sum(c.phishing + c.legitimate for c in self.counts)

    def validate(self) -> None:
        if self.total() == 0:
            raise ValueError("degenerate generator spec: zero samples")
        if not 0.0 <= self.signal <= 1.0:
            raise ValueError("signal must lie in [0, 1]")
        if self.body_words < 1 or self.subject_words < 0 or self.filler_vocab < 1:
            raise ValueError("word counts must be positive")
        for c in self.counts:
            if c.source not in SOURCES:
                raise ValueError(f"unknown source {c.source!r}")
            if c.phishing < 0 or c.legitimate < 0:
                raise ValueError("class counts must be non-negative")


def balanced_spec(n_per_class: int, signal: float = 0.8) -> GenSpec:
    return GenSpec(
        counts=(SourceCount("Synthetic", n_per_class, n_per_class),), signal=signal
    )


def _filler_words(n: int, rng: random.Random) -> list[str]:
    """Deterministic pseudo-words, disjoint from cues and stop words."""
    banned = set(PHISH_CUES) | set(LEGIT_CUES) | STOP_WORDS
    words: list[str] = []
    seen = set()
    while len(words) < n:
        word = "".join(rng.choice(_SYLLABLES) for _ in range(rng.randint(2, 4)))
        if word not in banned and word not in seen:
            seen.add(word)
            words.append(word)
    return words


def _stream(n_words: int, cues: tuple[str, ...], filler: list[str],
            signal: float, rng: random.Random) -> str:
    words = []
    for _ in range(n_words):
        if rng.random() < signal:
            words.append(rng.choice(cues))
        else:
            words.append(rng.choice(filler))
    return " ".join(words)


def gen_synthetic(spec: GenSpec, seed: int) -> list[EmailSample]:
    """Generate the corpus in manifest order (per source: phishing first,
    then legitimate). Output text is already clean (lowercase a-z words,
    no stop words), so it passes unchanged through the cleaning stage."""
    spec.validate()
    rng = random.Random(seed)
    filler = _filler_words(spec.filler_vocab, rng)
    samples: list[EmailSample] = []
    for entry in spec.counts:
        has_header = entry.source not in HEADERLESS_SOURCES
        for label, cues, count in (
            (LABEL_PHISHING, spec.phish_cues, entry.phishing),
            (LABEL_LEGITIMATE, spec.legit_cues, entry.legitimate),
        ):
            for _ in range(count):
                n_body = rng.randint(max(1, spec.body_words // 2), spec.body_words * 3 // 2)
                body = _stream(n_body, cues, filler, spec.signal, rng)
                subject = (
                    _stream(spec.subject_words, cues, filler, spec.signal, rng)
                    if has_header
                    else ""
                )
                samples.append(
                    EmailSample(
                        header_subject=subject,
                        header_content_type="text plain" if has_header else "",
                        body=body,
                        label=label,
                        source=entry.source,
                        has_header=has_header,
                    )
                )
    return samples
