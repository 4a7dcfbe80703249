"""Pronunciation lexicon, corpus moderation, and the lyrics n-gram LM.

The lexicon is parsed from CMU-dictionary-format text into both a
word -> pronunciations map and a phoneme trie used by the word decoder.
The language model is add-k smoothed with stupid backoff, small enough to
train instantly and normalize exactly.
"""

from __future__ import annotations

import math
import re
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable

import numpy as np

from . import container
from .errors import ConfigError, DataError, LexiconError
from .phoneme_recognizer import PHONEME_TO_INDEX

SENT_START = "<s>"
SENT_END = "</s>"
UNKNOWN = "<unk>"

BACKOFF_FACTOR = 0.4

_TOKEN_RE = re.compile(r"[a-z0-9']+")
_ALTERNATE_RE = re.compile(r"^(.*)\(\d+\)$")


def tokenize(line: str) -> list[str]:
    """Lowercase and strip punctuation except apostrophes."""
    return _TOKEN_RE.findall(line.lower())


# ---------------------------------------------------------------------------
# Lexicon


class TrieNode:
    __slots__ = ("children", "words", "node_id")

    def __init__(self, node_id: int):
        self.children: dict[int, TrieNode] = {}
        self.words: list[str] = []
        self.node_id = node_id


@dataclass
class Lexicon:
    """word -> pronunciations plus a trie over phoneme indices."""

    pronunciations: dict[str, list[tuple[int, ...]]]
    root: TrieNode = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self):
        if self.root is None:
            self.root = TrieNode(0)
            counter = 1
            for word in self.pronunciations:
                for pron in self.pronunciations[word]:
                    node = self.root
                    for idx in pron:
                        if idx not in node.children:
                            node.children[idx] = TrieNode(counter)
                            counter += 1
                        node = node.children[idx]
                    if word not in node.words:
                        node.words.append(word)

    def __len__(self) -> int:
        return len(self.pronunciations)

    def lookup(self, pron: Iterable[int]) -> list[str]:
        """Words whose pronunciation is exactly ``pron``."""
        node = self.root
        for idx in pron:
            node = node.children.get(int(idx))
            if node is None:
                return []
        return list(node.words)

    def entries(self) -> list[tuple[str, tuple[int, ...]]]:
        return [
            (word, pron)
            for word in self.pronunciations
            for pron in self.pronunciations[word]
        ]


def parse_lexicon(text: str) -> Lexicon:
    """Parse CMU-dictionary format: ``WORD  PH1 PH2 ...``.

    Stress digits are stripped, words lowercased, alternates like
    ``WORD(2)`` merged under the base word, identical duplicates dropped.
    """
    pronunciations: dict[str, list[tuple[int, ...]]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(";;;"):
            continue
        parts = line.split()
        if len(parts) < 2:
            raise LexiconError(f"line {lineno}: expected 'WORD PHONEMES...', got {raw!r}")
        word = parts[0].lower()
        match = _ALTERNATE_RE.match(word)
        if match:
            word = match.group(1)
        pron = []
        for sym in parts[1:]:
            base = sym.rstrip("012").upper()
            if base not in PHONEME_TO_INDEX:
                raise LexiconError(f"line {lineno}: unknown phoneme symbol {sym!r}")
            pron.append(PHONEME_TO_INDEX[base])
        existing = pronunciations.setdefault(word, [])
        if tuple(pron) not in existing:
            existing.append(tuple(pron))
    if not pronunciations:
        raise LexiconError("lexicon is empty")
    return Lexicon(pronunciations)


def load_lexicon(path: str) -> Lexicon:
    with open(path, encoding="utf-8") as fp:
        return parse_lexicon(fp.read())


# ---------------------------------------------------------------------------
# Moderation


@dataclass(frozen=True)
class ModerationList:
    keywords: frozenset[str]

    def __post_init__(self):
        object.__setattr__(
            self, "keywords", frozenset(k.lower() for k in self.keywords)
        )

    @classmethod
    def from_text(cls, text: str) -> "ModerationList":
        return cls(frozenset(w.strip().lower() for w in text.splitlines() if w.strip()))


def moderate_corpus(
    lines: list[str], moderation: ModerationList
) -> tuple[list[str], int]:
    """Drop whole lines containing any listed keyword; returns (kept, removed).

    Removal is by exact token match after lowercasing and punctuation
    stripping, so surviving lines stay intact.
    """
    if not moderation.keywords:
        raise ConfigError("moderation enabled with an empty keyword list")
    kept = []
    removed = 0
    for line in lines:
        if any(tok in moderation.keywords for tok in tokenize(line)):
            removed += 1
        else:
            kept.append(line)
    return kept, removed


# ---------------------------------------------------------------------------
# N-gram language model


@dataclass
class NGramLM:
    """Add-k n-gram model with stupid backoff over lowercased lyric lines."""

    order: int
    k: float
    vocabulary: tuple[str, ...]  # sorted lexicographically
    counts: dict[tuple[str, ...], dict[str, int]]
    totals: dict[tuple[str, ...], int]

    def __post_init__(self):
        self._vocab_set = set(self.vocabulary)

    @property
    def vocab_size(self) -> int:
        return len(self.vocabulary)

    def normalize_word(self, word: str) -> str:
        word = word.lower()
        return word if word in self._vocab_set else UNKNOWN

    def probability(self, context: tuple[str, ...], word: str) -> float:
        """P(word | context) with add-k smoothing and stupid backoff."""
        context = tuple(context)[-(self.order - 1) :] if self.order > 1 else ()
        word = self.normalize_word(word)
        total = self.totals.get(context)
        if total is not None:
            count = self.counts[context].get(word, 0)
            return (count + self.k) / (total + self.k * self.vocab_size)
        if not context:
            # unreachable after training (unigram context always observed)
            return self.k / (self.k * self.vocab_size) if self.k > 0 else 0.0
        return BACKOFF_FACTOR * self.probability(context[1:], word)

    def log_probability(self, context: tuple[str, ...], word: str) -> float:
        p = self.probability(context, word)
        return math.log(p) if p > 0 else -math.inf

    def start_context(self) -> tuple[str, ...]:
        return (SENT_START,) * (self.order - 1)


def train_ngram(lines: list[str], order: int = 3, k: float = 0.1) -> NGramLM:
    """Count n-grams of every order over marker-padded token lines."""
    if order < 1:
        raise ConfigError(f"order must be >= 1, got {order}")
    if k < 0:
        raise ConfigError(f"add-k constant must be >= 0, got {k}")
    counts: dict[tuple[str, ...], dict[str, int]] = {}
    totals: dict[tuple[str, ...], int] = {}
    vocab: set[str] = set()
    seen_any = False
    for line in lines:
        tokens = tokenize(line)
        if not tokens:
            continue
        seen_any = True
        vocab.update(tokens)
        seq = [SENT_START] * (order - 1) + tokens + [SENT_END]
        for i in range(order - 1, len(seq)):
            word = seq[i]
            for m in range(1, order + 1):
                context = tuple(seq[i - m + 1 : i])
                counts.setdefault(context, {})
                counts[context][word] = counts[context].get(word, 0) + 1
                totals[context] = totals.get(context, 0) + 1
    if not seen_any:
        raise DataError("cannot train a language model on an empty corpus")
    vocab.update((SENT_START, SENT_END, UNKNOWN))
    return NGramLM(order, k, tuple(sorted(vocab)), counts, totals)


def lm_score(lm: NGramLM, words: list[str]) -> float:
    """Log probability of a word sequence with start/end markers."""
    context = lm.start_context()
    score = 0.0
    for word in words:
        word = lm.normalize_word(word)
        score += lm.log_probability(context, word)
        context = (context + (word,))[-(lm.order - 1) :] if lm.order > 1 else ()
    score += lm.log_probability(context, SENT_END)
    return score


# ---------------------------------------------------------------------------
# Persistence: IMLY tensor container + UTF-8 vocabulary block


def save_lm(path: str, lm: NGramLM) -> None:
    word_id = {w: i for i, w in enumerate(lm.vocabulary)}
    tensors: dict[str, np.ndarray] = {
        "lm.meta": np.array([lm.order, lm.k, BACKOFF_FACTOR], dtype=np.float64)
    }
    for m in range(1, lm.order + 1):
        rows = []
        for context in sorted(c for c in lm.counts if len(c) == m - 1):
            for word in sorted(lm.counts[context]):
                rows.append(
                    [word_id[t] for t in context]
                    + [word_id[word], lm.counts[context][word]]
                )
        tensors[f"lm.ngrams.o{m}"] = (
            np.array(rows, dtype=np.float64)
            if rows
            else np.zeros((0, m + 1), dtype=np.float64)
        )
    with open(path, "wb") as fp:
        container.write_tensors(fp, tensors)
        _write_vocab(fp, lm.vocabulary)


def load_lm(path: str) -> NGramLM:
    with open(path, "rb") as fp:
        tensors = container.read_tensors(fp)
        vocabulary = _read_vocab(fp)
    try:
        order_f, k, _backoff = tensors["lm.meta"]
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path} is not a language model container: {exc}") from exc
    order = int(round(float(order_f)))
    counts: dict[tuple[str, ...], dict[str, int]] = {}
    totals: dict[tuple[str, ...], int] = {}
    for m in range(1, order + 1):
        rows = tensors.get(f"lm.ngrams.o{m}")
        if rows is None:
            raise DataError(f"{path} is missing order-{m} counts")
        for row in np.asarray(rows, dtype=np.float64):
            context = tuple(vocabulary[int(round(i))] for i in row[: m - 1])
            word = vocabulary[int(round(row[m - 1]))]
            count = int(round(row[m]))
            counts.setdefault(context, {})[word] = count
            totals[context] = totals.get(context, 0) + count
    return NGramLM(order, float(k), tuple(vocabulary), counts, totals)


def _write_vocab(fp: BinaryIO, vocabulary: tuple[str, ...]) -> None:
    fp.write(struct.pack("<I", len(vocabulary)))
    for word in vocabulary:
        encoded = word.encode("utf-8")
        fp.write(struct.pack("<H", len(encoded)))
        fp.write(encoded)


def _read_vocab(fp: BinaryIO) -> list[str]:
    raw = fp.read(4)
    if len(raw) != 4:
        raise DataError("missing vocabulary block")
    (count,) = struct.unpack("<I", raw)
    words = []
    for _ in range(count):
        (length,) = struct.unpack("<H", fp.read(2))
        words.append(fp.read(length).decode("utf-8"))
    return words
