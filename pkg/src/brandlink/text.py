"""Query normalization and hashed n-gram featurization.

Normalization applies per-character Unicode compatibility folding plus case
folding, collapses whitespace, and keeps an offset map back into the raw
string so detected spans can be reported against the original query.

Featurization hashes word n-grams and character n-grams into a fixed-size
TF(-IDF) vector with unit L2 norm.  The hash function is fixed and named in
the config so serialized models can refuse inputs featurized differently.
"""
from __future__ import annotations

import dataclasses
import math
import unicodedata
import zlib
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

import numpy as np

# Feature hashing scheme identifier, persisted inside model artifacts.
HASH_NAME = "crc32/v1"

_MIN_DIM = 2**16

# Codepoint ranges treated as CJK for the char-n-gram-only fallback.
_CJK_RANGES = (
    (0x3040, 0x30FF),   # hiragana, katakana
    (0x3400, 0x4DBF),   # CJK extension A
    (0x4E00, 0x9FFF),   # CJK unified ideographs
    (0xAC00, 0xD7AF),   # hangul syllables
    (0xF900, 0xFAFF),   # CJK compatibility ideographs
)


@lru_cache(maxsize=65536)
def _fold_char(ch: str) -> str:
    """Compatibility-fold one character to a form stable under refolding."""
    out = unicodedata.normalize("NFKC", ch).casefold()
    while True:
        again = "".join(unicodedata.normalize("NFKC", c).casefold() for c in out)
        if again == out:
            return out
        out = again


@dataclass(frozen=True)
class NormalizedText:
    """Normalized text with token spans and raw-offset recovery.

    ``token_spans`` are [start, end) character offsets of whitespace-split
    tokens inside ``text``.  ``source_offsets[i]`` is the index of the raw
    character that produced normalized character ``i``.
    """

    text: str
    token_spans: tuple[tuple[int, int], ...]
    source_offsets: tuple[int, ...] = ()

    @property
    def tokens(self) -> tuple[str, ...]:
        return tuple(self.text[s:e] for s, e in self.token_spans)

    def to_raw_span(self, span: tuple[int, int]) -> tuple[int, int]:
        """Map a span in normalized space back to raw-string offsets."""
        start, end = span
        if not (0 <= start < end <= len(self.text)):
            raise ValueError(f"span {span} out of range")
        if len(self.source_offsets) != len(self.text):
            raise ValueError("this NormalizedText carries no offset map")
        return self.source_offsets[start], self.source_offsets[end - 1] + 1


def normalize(raw: str) -> NormalizedText:
    """Normalize a raw query string.

    Applies compatibility + case folding per character, collapses any
    whitespace run to a single space, and strips the ends.  Idempotent:
    normalizing the ``text`` of the result reproduces it.

    Args:
        raw: Raw query text; may be empty.

    Returns:
        The normalized text with token spans and a raw-offset map.
    """
    chars: list[str] = []
    origins: list[int] = []
    for i, ch in enumerate(raw):
        for folded in _fold_char(ch):
            chars.append(folded)
            origins.append(i)

    out_chars: list[str] = []
    out_origins: list[int] = []
    pending_space = False
    for ch, origin in zip(chars, origins):
        if ch.isspace():
            pending_space = bool(out_chars)
            continue
        if pending_space:
            out_chars.append(" ")
            out_origins.append(origin)
            pending_space = False
        out_chars.append(ch)
        out_origins.append(origin)

    text = "".join(out_chars)
    spans: list[tuple[int, int]] = []
    start: int | None = None
    for i, ch in enumerate(text):
        if ch == " ":
            if start is not None:
                spans.append((start, i))
                start = None
        elif start is None:
            start = i
    if start is not None:
        spans.append((start, len(text)))

    return NormalizedText(
        text=text,
        token_spans=tuple(spans),
        source_offsets=tuple(out_origins),
    )


@dataclass(frozen=True, eq=False)
class IdfTable:
    """Dense per-bucket inverse document frequencies."""

    weights: np.ndarray  # float32, shape (dim,)
    n_docs: int

    def __post_init__(self) -> None:
        if self.n_docs < 1:
            raise ValueError("idf table requires at least one document")
        self.weights.setflags(write=False)


@dataclass(frozen=True, eq=False)
class FeaturizerConfig:
    """Hashed n-gram featurizer parameters.

    ``dim`` must be at least 2**16 to keep hash collisions rare for catalog
    scale surface forms.  ``char_ngrams`` is the inclusive (min, max) order
    range.  When ``idf`` is present, term frequencies are scaled by it.
    """

    dim: int = 2**20
    word_ngrams: int = 2
    char_ngrams: tuple[int, int] = (2, 4)
    idf: IdfTable | None = None
    hash_name: str = HASH_NAME

    def __post_init__(self) -> None:
        if self.dim < _MIN_DIM:
            raise ValueError(f"dim must be at least {_MIN_DIM}")
        if self.word_ngrams < 1:
            raise ValueError("word_ngrams must be at least 1")
        lo, hi = self.char_ngrams
        if not (1 <= lo <= hi):
            raise ValueError(f"invalid char n-gram range {self.char_ngrams}")
        if self.hash_name != HASH_NAME:
            raise ValueError(f"unsupported hash scheme {self.hash_name!r}")
        if self.idf is not None and self.idf.weights.shape != (self.dim,):
            raise ValueError("idf table shape does not match dim")


@dataclass(frozen=True, eq=False)
class SparseVector:
    """Immutable sparse vector with strictly increasing indices."""

    indices: np.ndarray  # int64, strictly increasing
    values: np.ndarray   # float64, finite
    dim: int

    def __post_init__(self) -> None:
        if self.indices.shape != self.values.shape:
            raise ValueError("indices and values must have equal length")
        if len(self.indices) > 0:
            if int(self.indices[0]) < 0 or int(self.indices[-1]) >= self.dim:
                raise ValueError("indices out of range")
            if np.any(np.diff(self.indices) <= 0):
                raise ValueError("indices must be strictly increasing")
            if not np.all(np.isfinite(self.values)):
                raise ValueError("values must be finite")
        self.indices.setflags(write=False)
        self.values.setflags(write=False)

    @classmethod
    def zero(cls, dim: int) -> SparseVector:
        return cls(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64), dim)

    @property
    def nnz(self) -> int:
        return len(self.indices)

    def norm(self) -> float:
        return float(np.sqrt(np.dot(self.values, self.values)))

    def dot(self, other: SparseVector) -> float:
        if self.dim != other.dim:
            raise ValueError("dimension mismatch")
        if self.nnz == 0 or other.nnz == 0:
            return 0.0
        pos = np.searchsorted(other.indices, self.indices)
        pos = np.minimum(pos, other.nnz - 1)
        hit = other.indices[pos] == self.indices
        return float(np.dot(self.values[hit], other.values[pos[hit]]))

    def cosine(self, other: SparseVector) -> float:
        denom = self.norm() * other.norm()
        if denom == 0.0:
            return 0.0
        return self.dot(other) / denom


def _is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def _hash(key: bytes, dim: int) -> int:
    return zlib.crc32(key) % dim


def hashed_counts(text: NormalizedText, config: FeaturizerConfig) -> dict[int, int]:
    """Raw term-frequency counts per hash bucket for one text."""
    counts: dict[int, int] = {}

    # Word n-grams over runs of non-CJK tokens; CJK tokens fall back to the
    # character n-grams alone.
    run: list[str] = []
    runs: list[list[str]] = []
    for token in text.tokens:
        if any(_is_cjk(c) for c in token):
            if run:
                runs.append(run)
                run = []
        else:
            run.append(token)
    if run:
        runs.append(run)
    for tokens in runs:
        for n in range(1, config.word_ngrams + 1):
            for i in range(len(tokens) - n + 1):
                key = b"w:" + " ".join(tokens[i : i + n]).encode("utf-8")
                idx = _hash(key, config.dim)
                counts[idx] = counts.get(idx, 0) + 1

    lo, hi = config.char_ngrams
    s = text.text
    for n in range(lo, hi + 1):
        for i in range(len(s) - n + 1):
            key = b"c:" + s[i : i + n].encode("utf-8")
            idx = _hash(key, config.dim)
            counts[idx] = counts.get(idx, 0) + 1

    return counts


def featurize(text: NormalizedText, config: FeaturizerConfig) -> SparseVector:
    """Featurize normalized text into a unit-norm hashed TF(-IDF) vector.

    Args:
        text: Output of :func:`normalize`.
        config: Featurizer parameters, optionally with a fitted idf table.

    Returns:
        A sparse vector of L2 norm 1, or the zero vector for empty input.
    """
    counts = hashed_counts(text, config)
    if not counts:
        return SparseVector.zero(config.dim)
    indices = np.array(sorted(counts), dtype=np.int64)
    values = np.array([counts[int(i)] for i in indices], dtype=np.float64)
    if config.idf is not None:
        values = values * config.idf.weights[indices].astype(np.float64)
    norm = float(np.sqrt(np.dot(values, values)))
    if norm == 0.0:
        return SparseVector.zero(config.dim)
    return SparseVector(indices, values / norm, config.dim)


def vectorize(raw: str, config: FeaturizerConfig) -> SparseVector:
    """Shorthand for ``featurize(normalize(raw), config)``."""
    return featurize(normalize(raw), config)


def fit_idf(corpus: Iterable[NormalizedText], config: FeaturizerConfig) -> FeaturizerConfig:
    """Fit smoothed inverse document frequencies over a corpus.

    For a corpus of N documents a bucket seen in df of them gets weight
    log((1 + N) / (1 + df)) + 1; unseen buckets get the df = 0 weight.

    Args:
        corpus: Normalized documents; must be non-empty.
        config: Base featurizer parameters.

    Returns:
        A copy of ``config`` carrying the fitted idf table.

    Raises:
        ValueError: If the corpus is empty.
    """
    df = np.zeros(config.dim, dtype=np.int64)
    n_docs = 0
    for doc in corpus:
        n_docs += 1
        buckets = hashed_counts(doc, config)
        if buckets:
            df[np.fromiter(buckets.keys(), dtype=np.int64)] += 1
    if n_docs == 0:
        raise ValueError("cannot fit idf on an empty corpus")
    weights = (np.log((1.0 + n_docs) / (1.0 + df)) + 1.0).astype(np.float32)
    return dataclasses.replace(config, idf=IdfTable(weights=weights, n_docs=n_docs))
