"""Tokenization and unigram+bigram count features.

The tokenizer is fixed so that feature extraction is reproducible bit for
bit: NFC normalize, lowercase, strip URLs, strip @mentions, then split on
anything that is not a letter or digit. A ``#`` directly in front of a
word stays attached to it, so hashtags survive as their own terms.
"""
from __future__ import annotations

import json
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput

SEP = " "  # never occurs inside a token

_URL = re.compile(r"(?:\b[a-z][a-z0-9+.\-]*://|\bwww\.)\S*")
_MENTION = re.compile(r"@\w+")
_TOKEN = re.compile(r"#?[^\W_]+")


def tokenize(text: str) -> list[str]:
    s = unicodedata.normalize("NFC", text)
    s = unicodedata.normalize("NFC", s.lower())
    s = _URL.sub(" ", s)
    s = _MENTION.sub(" ", s)
    return _TOKEN.findall(s)


def ngrams(tokens) -> list[str]:
    """Unigrams followed by adjacent-pair bigrams."""
    return list(tokens) + [a + SEP + b for a, b in zip(tokens, tokens[1:])]


@dataclass(frozen=True)
class Vocabulary:
    index: dict
    frozen: bool = True

    def __len__(self):
        return len(self.index)

    def __contains__(self, term):
        return term in self.index

    def terms(self) -> list[str]:
        out = [None] * len(self.index)
        for t, i in self.index.items():
            out[i] = t
        return out

    def to_json(self) -> str:
        return json.dumps(self.index, ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        index = {str(k): int(v) for k, v in json.loads(text).items()}
        if sorted(index.values()) != list(range(len(index))):
            raise ValueError("vocabulary indices must be dense 0..|V|-1")
        return cls(index)


def build_vocabulary(docs, min_count: int = 2) -> Vocabulary:
    """Collect every unigram and bigram seen at least ``min_count`` times.

    Terms are indexed in sorted order, which makes the result independent of
    document order.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter()
    for toks in docs:
        counts.update(ngrams(toks))
    if not counts:
        raise EmptyInput("no tokens in any document")
    kept = sorted(t for t, c in counts.items() if c >= min_count)
    return Vocabulary({t: i for i, t in enumerate(kept)})


@dataclass(frozen=True)
class FeatureVector:
    indices: np.ndarray
    counts: np.ndarray
    dim: int

    @property
    def nnz(self) -> int:
        return len(self.indices)

    def total(self) -> int:
        return int(self.counts.sum())

    def dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.counts
        return out


def featurize(tokens, vocab: Vocabulary) -> FeatureVector:
    if not vocab.frozen:
        raise ValueError("vocabulary must be frozen before featurizing")
    hits = Counter(vocab.index[t] for t in ngrams(tokens) if t in vocab.index)
    idx = np.array(sorted(hits), dtype=np.int64)
    cnt = np.array([hits[i] for i in idx], dtype=np.float64)
    return FeatureVector(idx, cnt, len(vocab))
