"""Email corpus ingestion: mbox/text parsing, header-body split, cleaning,
and tokenization into fixed-length integer sequences.

All functions are pure over immutable inputs and safe to call concurrently.
Token ids come from a stateless 64-bit FNV-1a hash, so no vocabulary ever
has to be coordinated between parties; id 0 is reserved for padding.
"""

from __future__ import annotations

import csv
import functools
import html
import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .stopwords import STOP_WORDS

LABEL_PHISHING = "phishing"
LABEL_LEGITIMATE = "legitimate"
LABELS = (LABEL_PHISHING, LABEL_LEGITIMATE)

# Canonical source order; per-source partitioning assigns client k the k-th
# source present in this order.
SOURCES = ("IWSPA", "Enron", "Nazario", "CSIROLike", "PhishbowlLike", "Synthetic")

# Fixed sequence lengths: word-header, char-header, word-body, char-body.
WORD_HEADER_LEN = 50
CHAR_HEADER_LEN = 100
WORD_BODY_LEN = 150
CHAR_BODY_LEN = 300
CHANNEL_LENGTHS = (WORD_HEADER_LEN, CHAR_HEADER_LEN, WORD_BODY_LEN, CHAR_BODY_LEN)

DEFAULT_VOCAB_DIM = 1 << 15

_MBOX_SEPARATOR = b"From "
_TAG_RE = re.compile(r"<[^>]*>")
_NON_ALPHA_RE = re.compile(r"[^a-z]+")
_FIELD_RE = re.compile(r"^([!-9;-~]+):(.*)$")


@dataclass(frozen=True)
class RawEmail:
    """One undecoded message: its bytes plus where it came from."""

    raw_bytes: bytes
    origin_file: str
    origin_index: int


@dataclass
class EmailSample:
    """One parsed email; label/source are attached by the ingest pipeline."""

    header_subject: str
    header_content_type: str
    body: str
    label: str | None = None
    source: str | None = None
    has_header: bool = True


@dataclass(eq=False, frozen=True)
class TokenSequences:
    """Four fixed-length id sequences (padding id 0, real ids in [1, vocab_dim))."""

    word_header: np.ndarray
    char_header: np.ndarray
    word_body: np.ndarray
    char_body: np.ndarray
    vocab_dim: int

    def channels(self) -> tuple[np.ndarray, ...]:
        return (self.word_header, self.char_header, self.word_body, self.char_body)


@dataclass
class ParseReport:
    """Accumulates non-fatal parsing anomalies across an ingest run."""

    messages_per_file: dict[str, int] = field(default_factory=dict)
    files_without_separator: list[str] = field(default_factory=list)
    preamble_bytes: dict[str, int] = field(default_factory=dict)
    empty_messages: int = 0
    warnings: list[str] = field(default_factory=list)
    samples_per_source: dict[str, int] = field(default_factory=dict)

    def warn(self, message: str) -> None:
        self.warnings.append(message)

    def to_json(self) -> dict:
        return {
            "messages_per_file": dict(sorted(self.messages_per_file.items())),
            "files_without_separator": sorted(self.files_without_separator),
            "preamble_bytes": dict(sorted(self.preamble_bytes.items())),
            "empty_messages": self.empty_messages,
            "warnings": list(self.warnings),
            "samples_per_source": dict(sorted(self.samples_per_source.items())),
        }


def parse_mbox(raw: bytes, origin: str, report: ParseReport | None = None) -> list[RawEmail]:
    """Split an mbox byte stream into messages.

    A message boundary is a line starting with "From " at column 0. A file
    with no separator at all yields one message spanning the whole file and
    is flagged in the report. Content before the first separator (a
    preamble) is dropped and flagged, so the message count always equals the
    separator count.
    """
    if not raw:
        if report is not None:
            report.messages_per_file[origin] = 0
        return []
    lines = raw.splitlines(keepends=True)
    boundaries = [i for i, line in enumerate(lines) if line.startswith(_MBOX_SEPARATOR)]
    messages: list[RawEmail] = []
    if not boundaries:
        messages.append(RawEmail(raw, origin, 0))
        if report is not None:
            report.files_without_separator.append(origin)
    else:
        if boundaries[0] > 0 and report is not None:
            skipped = b"".join(lines[: boundaries[0]])
            report.preamble_bytes[origin] = len(skipped)
        for n, start in enumerate(boundaries):
            end = boundaries[n + 1] if n + 1 < len(boundaries) else len(lines)
            content = b"".join(lines[start + 1 : end])
            if not content and report is not None:
                report.empty_messages += 1
                report.warn(f"{origin}: message {n} is empty")
            messages.append(RawEmail(content, origin, n))
    if report is not None:
        report.messages_per_file[origin] = len(messages)
    return messages


def _unfold(parts: list[str]) -> str:
    return " ".join(p.strip() for p in parts if p.strip())


def split_header_body(raw: RawEmail, report: ParseReport | None = None) -> EmailSample:
    """Separate the header block (terminated by the first blank line) from
    the body and keep only the Subject and Content-Type fields.

    If there is no blank line, or the block before it contains no
    recognizable "Name: value" field, the whole content is treated as body
    with has_header False. Duplicate fields keep the first occurrence and
    are recorded as a warning.
    """
    text = raw.raw_bytes.decode("utf-8", errors="replace")
    lines = [line.rstrip("\r") for line in text.split("\n")]
    if lines and lines[-1] == "":
        lines.pop()  # a trailing newline is not a blank separator line
    try:
        blank = lines.index("")
    except ValueError:
        return EmailSample("", "", text.strip(), has_header=False)

    fields: dict[str, list[str]] = {}
    current: str | None = None
    seen_any_field = False
    for line in lines[:blank]:
        match = _FIELD_RE.match(line)
        if match:
            seen_any_field = True
            name = match.group(1).lower()
            if name in fields:
                current = None
                if report is not None and name in ("subject", "content-type"):
                    report.warn(
                        f"{raw.origin_file}:{raw.origin_index}: duplicate {name} field, first occurrence kept"
                    )
            else:
                fields[name] = [match.group(2)]
                current = name
        elif line[:1] in (" ", "\t") and current is not None:
            fields[current].append(line)
        else:
            current = None

    if not seen_any_field:
        return EmailSample("", "", text.strip(), has_header=False)
    body = "\n".join(lines[blank + 1 :]).strip()
    return EmailSample(
        header_subject=_unfold(fields.get("subject", [])),
        header_content_type=_unfold(fields.get("content-type", [])),
        body=body,
        has_header=True,
    )


def clean_text(text: str) -> str:
    """Strip HTML tags, decode entities, drop punctuation/non-alphabetic
    characters and stop words, lowercase, single-space separate.

    Idempotent: the output alphabet is [a-z ] so a second pass is a no-op.
    Tag stripping is a single linear scan (no recursive HTML parse).
    """
    text = _TAG_RE.sub(" ", text)
    text = html.unescape(text)
    text = _NON_ALPHA_RE.sub(" ", text.lower())
    return " ".join(w for w in text.split() if w not in STOP_WORDS)


def clean_sample(sample: EmailSample) -> EmailSample:
    return replace(
        sample,
        header_subject=clean_text(sample.header_subject),
        header_content_type=clean_text(sample.header_content_type),
        body=clean_text(sample.body),
    )


_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_FNV_MASK = (1 << 64) - 1


@functools.lru_cache(maxsize=1 << 20)
def _fnv1a64(token: str) -> int:
    h = _FNV_OFFSET
    for byte in token.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _FNV_MASK
    return h


def hash_token(token: str, vocab_dim: int) -> int:
    """Stateless token id in [1, vocab_dim); 0 is reserved for padding."""
    return _fnv1a64(token) % (vocab_dim - 1) + 1


def _sequence(tokens: list[str], length: int, vocab_dim: int) -> np.ndarray:
    ids = np.zeros(length, dtype=np.int32)
    for i, tok in enumerate(tokens[:length]):
        ids[i] = hash_token(tok, vocab_dim)
    return ids


def tokenize(sample: EmailSample, vocab_dim: int = DEFAULT_VOCAB_DIM) -> TokenSequences:
    """Map a cleaned sample to its four fixed-length id sequences.

    Sequences keep the first tokens and are right-padded with 0. The same
    hash covers words and characters, so two equal cleaned inputs always
    produce identical sequences on any platform.
    """
    if vocab_dim < 2:
        raise ValueError("vocab_dim must be at least 2")
    header_text = (sample.header_subject + " " + sample.header_content_type).strip()
    return TokenSequences(
        word_header=_sequence(header_text.split(), WORD_HEADER_LEN, vocab_dim),
        char_header=_sequence(list(header_text), CHAR_HEADER_LEN, vocab_dim),
        word_body=_sequence(sample.body.split(), WORD_BODY_LEN, vocab_dim),
        char_body=_sequence(list(sample.body), CHAR_BODY_LEN, vocab_dim),
        vocab_dim=vocab_dim,
    )


@dataclass
class TokenizedCorpus:
    """Tokenized dataset ready for featurization and partitioning."""

    sequences: list[TokenSequences]
    labels: np.ndarray  # 1 = phishing, 0 = legitimate
    sources: list[str]
    vocab_dim: int

    def __len__(self) -> int:
        return len(self.sequences)


def tokenize_corpus(samples: list[EmailSample], vocab_dim: int = DEFAULT_VOCAB_DIM) -> TokenizedCorpus:
    for i, s in enumerate(samples):
        if s.label not in LABELS:
            raise ValueError(f"sample {i} has no valid label: {s.label!r}")
    labels = np.fromiter(
        (1 if s.label == LABEL_PHISHING else 0 for s in samples), dtype=np.int8, count=len(samples)
    )
    return TokenizedCorpus(
        sequences=[tokenize(s, vocab_dim) for s in samples],
        labels=labels,
        sources=[s.source or "Synthetic" for s in samples],
        vocab_dim=vocab_dim,
    )


# --- dataset interchange: JSON-lines, one sample per line, UTF-8 ---

def save_dataset(samples: list[EmailSample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(
                json.dumps(
                    {
                        "header_subject": s.header_subject,
                        "header_content_type": s.header_content_type,
                        "body": s.body,
                        "label": s.label,
                        "source": s.source,
                        "has_header": s.has_header,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_dataset(path: str | Path) -> list[EmailSample]:
    samples = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            samples.append(
                EmailSample(
                    header_subject=obj["header_subject"],
                    header_content_type=obj["header_content_type"],
                    body=obj["body"],
                    label=obj["label"],
                    source=obj["source"],
                    has_header=obj["has_header"],
                )
            )
    return samples


def _label_from_path(path: Path) -> str | None:
    parts = {p.lower() for p in path.parts}
    if "phishing" in parts:
        return LABEL_PHISHING
    if "legitimate" in parts:
        return LABEL_LEGITIMATE
    return None


def ingest_manifest(manifest_path: str | Path, report: ParseReport | None = None) -> list[EmailSample]:
    """Parse every file listed in a `path,label,source` manifest CSV.

    Paths are resolved relative to the manifest location. Files ending in
    .mbox are split on "From " separators; anything else is one message. An
    empty label cell falls back to the phishing/ vs legitimate/ directory
    convention.
    """
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    samples: list[EmailSample] = []
    with open(manifest_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["path", "label", "source"]:
            raise ValueError(f"{manifest_path}: manifest header must be exactly 'path,label,source'")
        for row in reader:
            rel = row["path"].strip()
            label = row["label"].strip().lower() or None
            source = row["source"].strip()
            path = root / rel
            if label is None:
                label = _label_from_path(Path(rel))
            if label not in LABELS:
                raise ValueError(f"{manifest_path}: no valid label for {rel!r}")
            if source not in SOURCES:
                raise ValueError(f"{manifest_path}: unknown source {source!r} for {rel!r}")
            data = path.read_bytes()
            if path.suffix.lower() == ".mbox":
                raws = parse_mbox(data, str(rel), report)
            else:
                raws = [RawEmail(data, str(rel), 0)] if data else []
            for raw in raws:
                sample = clean_sample(split_header_body(raw, report))
                sample.label = label
                sample.source = source
                samples.append(sample)
                if report is not None:
                    report.samples_per_source[source] = report.samples_per_source.get(source, 0) + 1
    return samples
