"""Dataset parsing and text preprocessing.

Turns raw corpus files into fixed-length sequences of vocabulary indices:
tokenize, lowercase, drop messages shorter than five tokens, rank tokens by
corpus frequency, then truncate/pad every message to a fixed length.

Supported corpus layouts:

* ``bgl`` / ``thunderbird`` -- one message per line; the first
  whitespace-delimited field is the alert category tag, ``-`` meaning a
  non-alert (normal) line.  The tag and the fixed header fields that follow
  it (timestamp, date, node, time, location, component) are excluded from
  the message text: the tag would leak the label and the per-line timestamps
  would flood the vocabulary with one-off tokens.
* ``openstack`` / ``generic`` -- one message per line, whole line is the
  text; labels come from a sidecar file of ``<line-number> <0|1>`` pairs
  (1-based).  Lines absent from the sidecar are skipped.
* ``imdb`` -- directory tree with ``pos/`` and ``neg/`` folders of ``.txt``
  files, one review per file, mapping to labels 1 and 0.
"""

from __future__ import annotations

import os
import string
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .numerics import seeded_shuffle

DATASETS = ("bgl", "thunderbird", "openstack", "imdb", "generic")

# Number of whitespace-delimited header fields before the free-text message
# content in loghub-layout corpora (alert tag included).
HEADER_FIELDS = {"bgl": 9, "thunderbird": 9}

_EDGE_PUNCT = string.punctuation


@dataclass
class RawRecord:
    """A tokenized message with its binary label (1 normal, 0 anomalous)."""

    tokens: list
    label: int
    dataset: str = "generic"


@dataclass
class TokenSequence:
    """Fixed-length vector of vocabulary indices plus the record label."""

    indices: np.ndarray
    label: int


class Vocabulary:
    """Token-to-index map ranked by descending corpus frequency.

    Index 0 is reserved for padding (and unknown tokens); indices 1..V are
    assigned most-frequent-first, ties broken lexicographically.
    """

    def __init__(self, index_by_token: dict):
        self._index = dict(index_by_token)
        self._tokens = sorted(self._index, key=self._index.get)

    @classmethod
    def from_counts(cls, counts: Counter) -> "Vocabulary":
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return cls({tok: i + 1 for i, (tok, _) in enumerate(ranked)})

    @property
    def size(self) -> int:
        """V: the number of distinct tokens (indices run 1..V)."""
        return len(self._index)

    def index_of(self, token: str) -> int:
        """Index of ``token``, or 0 when out of vocabulary."""
        return self._index.get(token, 0)

    def items(self):
        """(token, index) pairs sorted by index."""
        return [(tok, self._index[tok]) for tok in self._tokens]

    def __len__(self):
        return len(self._index)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self._index == other._index


def tokenize(text: str) -> list:
    """Lowercase, split on whitespace, strip punctuation from token edges.

    Tokens that are empty after stripping (e.g. a bare ``-``) are dropped;
    interior punctuation such as hyphens is kept.
    """
    out = []
    for raw in text.lower().split():
        tok = raw.strip(_EDGE_PUNCT)
        if tok:
            out.append(tok)
    return out


def _read_sidecar_labels(labels_path: str) -> dict:
    labels = {}
    with open(labels_path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2 or not parts[0].isdigit() or parts[1] not in ("0", "1"):
                raise ValueError(f"{labels_path}:{lineno}: malformed label line {line!r}")
            labels[int(parts[0])] = int(parts[1])
    return labels


def _parse_tagged_lines(path: str, dataset: str) -> Iterator[RawRecord]:
    header = HEADER_FIELDS[dataset]
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for line in fh:
            fields = line.split()
            if not fields:
                continue
            label = 1 if fields[0] == "-" else 0
            content = fields[header:] if len(fields) > header else fields[1:]
            tokens = tokenize(" ".join(content))
            if tokens:
                yield RawRecord(tokens, label, dataset)


def _parse_sidecar_lines(path: str, dataset: str, labels_path: str) -> Iterator[RawRecord]:
    if labels_path is None:
        raise ValueError(f"dataset {dataset!r} requires a sidecar label file")
    labels = _read_sidecar_labels(labels_path)
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            label = labels.get(lineno)
            if label is None:
                continue
            tokens = tokenize(line)
            if tokens:
                yield RawRecord(tokens, label, dataset)


def _parse_imdb_tree(path: str) -> Iterator[RawRecord]:
    found = False
    for dirpath, _dirnames, filenames in sorted(os.walk(path), key=lambda t: t[0]):
        base = os.path.basename(dirpath)
        if base not in ("pos", "neg"):
            continue
        found = True
        label = 1 if base == "pos" else 0
        for name in sorted(filenames):
            if not name.endswith(".txt"):
                continue
            with open(os.path.join(dirpath, name), "r", encoding="utf-8", errors="replace") as fh:
                tokens = tokenize(fh.read())
            if tokens:
                yield RawRecord(tokens, label, "imdb")
    if not found:
        raise ValueError(f"no pos/ or neg/ directories found under {path}")


def parse_dataset(path: str, dataset: str, labels_path: str = None) -> Iterator[RawRecord]:
    """Stream labeled, tokenized records from a corpus file or directory.

    Parsing is line-streaming; the corpus is never loaded whole.
    """
    if dataset not in DATASETS:
        raise ValueError(f"unknown dataset {dataset!r}; expected one of {DATASETS}")
    if not os.path.exists(path):
        raise FileNotFoundError(f"dataset path does not exist: {path}")
    if dataset in ("bgl", "thunderbird"):
        return _parse_tagged_lines(path, dataset)
    if dataset in ("openstack", "generic"):
        return _parse_sidecar_lines(path, dataset, labels_path)
    return _parse_imdb_tree(path)


def filter_short(records: Iterable[RawRecord], min_len: int = 5) -> Iterator[RawRecord]:
    """Drop records with fewer than ``min_len`` tokens, preserving order."""
    for rec in records:
        if len(rec.tokens) >= min_len:
            yield rec


def build_vocabulary(records: Iterable[RawRecord]) -> Vocabulary:
    """Rank every token by descending frequency over the record stream."""
    counts = Counter()
    empty = True
    for rec in records:
        empty = False
        counts.update(rec.tokens)
    if empty:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    return Vocabulary.from_counts(counts)


def encode(record: RawRecord, vocab: Vocabulary, length: int) -> TokenSequence:
    """Map tokens to indices, keep the first ``length``, pad with 0 at the end."""
    indices = np.zeros(length, dtype=np.int64)
    for i, tok in enumerate(record.tokens[:length]):
        indices[i] = vocab.index_of(tok)
    return TokenSequence(indices, record.label)


def preprocess_corpus(
    path: str,
    dataset: str,
    length: int,
    rng: np.random.Generator,
    min_tokens: int = 5,
    labels_path: str = None,
):
    """Full preprocessing: parse, filter, build vocabulary, encode, shuffle.

    Returns ``(positive, negative, vocabulary)`` where the two lists of
    :class:`TokenSequence` partition the surviving records by label.  The
    corpus is streamed twice (once for the vocabulary, once for encoding)
    so peak memory stays proportional to the encoded output.
    """
    vocab = build_vocabulary(filter_short(parse_dataset(path, dataset, labels_path), min_tokens))
    encoded = [
        encode(rec, vocab, length)
        for rec in filter_short(parse_dataset(path, dataset, labels_path), min_tokens)
    ]
    shuffled = seeded_shuffle(encoded, rng)
    positive = [seq for seq in shuffled if seq.label == 1]
    negative = [seq for seq in shuffled if seq.label == 0]
    return positive, negative, vocab


def sequences_to_arrays(sequences) -> tuple:
    """Stack a TokenSequence list into (N, L) index and (N,) label arrays."""
    if not sequences:
        raise ValueError("empty sequence list")
    indices = np.stack([seq.indices for seq in sequences]).astype(np.int64)
    labels = np.array([seq.label for seq in sequences], dtype=np.int64)
    return indices, labels
