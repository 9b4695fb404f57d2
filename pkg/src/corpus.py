# src/corpus.py

"""
Corpus handling: CoNLL-style readers/writers, the IOB codec with repair,
vocabulary construction, the train/validation split and chunk-length
statistics.
"""

import hashlib
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from src.errors import DomainError, ParseError, StateError, TilingError
from src.layers import normalize_chars, normalize_word

logger = logging.getLogger(__name__)

# Column layout per format: token first, gold tag last, anything between is carried but unused.
FORMATS = {
    "chunking3col": 3,
    "slot2col": 2,
}

OUTSIDE = "O"
PAD_TOKEN = "<pad>"
OOV_TOKEN = "<unk>"
PAD_INDEX = 0
OOV_INDEX = 1

LENGTH_BUCKETS = ("1", "2", ">=3")

_TAG_PATTERN = re.compile(r"^(O|[BI]-\S+)$")


# --- Domain types ---

@dataclass
class Sentence:
    tokens: List[str]
    gold_tags: List[str]
    id: int = 0
    extra: List[Tuple[str, ...]] = field(default_factory=list)

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True, order=True)
class ChunkSpan:
    begin: int
    length: int
    label: str

    @property
    def end(self):
        """Exclusive end index."""
        return self.begin + self.length

    @property
    def last(self):
        return self.begin + self.length - 1

    @property
    def is_outside(self):
        return self.label == OUTSIDE


def length_bucket(length):
    return LENGTH_BUCKETS[min(length, 3) - 1]


# --- Tag helpers ---

def split_tag(tag):
    """'B-NP' -> ('B', 'NP'); 'O' -> ('O', ''); bare 'B'/'I' -> ('B'/'I', '')."""
    if tag == OUTSIDE:
        return OUTSIDE, ""
    prefix, _, label = tag.partition("-")
    return prefix, label


def join_tag(prefix, label):
    if prefix == OUTSIDE:
        return OUTSIDE
    return f"{prefix}-{label}" if label else prefix


def strip_labels(tags):
    """Drop content labels, leaving the {B, I, O} segmentation alphabet."""
    return [split_tag(t)[0] for t in tags]


def repair_iob(tags):
    """
    Turn every I-X that cannot continue a chunk into B-X.

    An I-X continues a chunk only after B-X or I-X; after O, at sentence start
    or after a chunk with another label it starts a new one.
    """
    repaired = []
    prev_prefix, prev_label = OUTSIDE, ""
    for tag in tags:
        prefix, label = split_tag(tag)
        if prefix == "I" and (prev_prefix == OUTSIDE or prev_label != label):
            prefix = "B"
        repaired.append(join_tag(prefix, label))
        prev_prefix, prev_label = prefix, label
    return repaired


def iob_to_chunks(tags):
    """Spans tiling the sentence; every O token is its own length-1 span."""
    if repair_iob(tags) != list(tags):
        raise StateError("tag sequence needs repair_iob before span extraction")
    spans = []
    begin, label = None, None
    for k, tag in enumerate(tags):
        prefix, tag_label = split_tag(tag)
        if prefix == "I":
            continue
        if begin is not None:
            spans.append(ChunkSpan(begin, k - begin, label))
            begin = None
        if prefix == OUTSIDE:
            spans.append(ChunkSpan(k, 1, OUTSIDE))
        else:
            begin, label = k, tag_label
    if begin is not None:
        spans.append(ChunkSpan(begin, len(tags) - begin, label))
    return spans


def chunks_to_iob(spans, sentence_length):
    """Inverse of ``iob_to_chunks``; spans must tile [0, sentence_length)."""
    tags = [None] * sentence_length
    for span in sorted(spans, key=lambda s: s.begin):
        if span.length < 1:
            raise TilingError(f"span {span} has no tokens", span.begin)
        for k in range(span.begin, span.end):
            if k < 0 or k >= sentence_length:
                raise TilingError(f"span {span} runs outside the sentence", k)
            if tags[k] is not None:
                raise TilingError(f"span {span} overlaps an earlier span", k)
            if span.label == OUTSIDE:
                tags[k] = OUTSIDE
            else:
                tags[k] = join_tag("B" if k == span.begin else "I", span.label)
    for k, tag in enumerate(tags):
        if tag is None:
            raise TilingError("spans leave a gap", k)
    return tags


def labeled_chunks(tags):
    """Chunks of a (possibly unrepaired) tag sequence, O spans excluded."""
    return [s for s in iob_to_chunks(repair_iob(tags)) if not s.is_outside]


def split_long_spans(spans, max_length):
    """Cut spans longer than ``max_length`` into consecutive same-label pieces."""
    pieces = []
    for span in spans:
        if span.length <= max_length:
            pieces.append(span)
            continue
        for start in range(span.begin, span.end, max_length):
            pieces.append(ChunkSpan(start, min(max_length, span.end - start), span.label))
    return pieces


# --- Reading and writing ---

def parse_conll(text, format="chunking3col", source="<text>"):
    """
    Parse blank-line separated sentences of ``token [extra...] tag`` lines.

    Returns a list of Sentence; an empty input gives an empty list.
    """
    if format not in FORMATS:
        raise ParseError(f"unknown format '{format}' (expected one of {', '.join(FORMATS)})", source)
    width = FORMATS[format]
    sentences = []
    tokens, tags, extra = [], [], []

    def flush():
        if tokens:
            sentences.append(Sentence(list(tokens), list(tags), len(sentences), list(extra)))
            tokens.clear()
            tags.clear()
            extra.clear()

    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            flush()
            continue
        if fields[0] == "-DOCSTART-":
            continue
        if len(fields) != width:
            raise ParseError(f"expected {width} columns, found {len(fields)}", source, lineno)
        tag = fields[-1]
        if not _TAG_PATTERN.match(tag):
            raise ParseError(f"malformed tag '{tag}'", source, lineno)
        tokens.append(fields[0])
        tags.append(tag)
        extra.append(tuple(fields[1:-1]))
    flush()
    return sentences


def read_conll(path, format="chunking3col"):
    with open(path, encoding="utf-8") as f:
        return parse_conll(f.read(), format, source=str(path))


def serialize_conll(sentences, predictions=None):
    """CoNLL text for ``sentences``; with ``predictions`` a predicted-tag column is appended."""
    blocks = []
    for n, sentence in enumerate(sentences):
        lines = []
        for k, token in enumerate(sentence.tokens):
            fields = [token]
            if sentence.extra:
                fields.extend(sentence.extra[k])
            fields.append(sentence.gold_tags[k])
            if predictions is not None:
                fields.append(predictions[n][k])
            lines.append(" ".join(fields))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


# --- Vocabulary ---

def _digest(entries):
    return hashlib.sha256("\n".join(entries).encode("utf-8")).hexdigest()


@dataclass
class Vocab:
    words: List[str]
    chars: List[str]
    labels: List[str]
    tags: List[str]

    def __post_init__(self):
        self.word_index = {w: k for k, w in enumerate(self.words)}
        self.char_index = {c: k for k, c in enumerate(self.chars)}
        self.label_index = {l: k for k, l in enumerate(self.labels)}
        self.tag_index = {t: k for k, t in enumerate(self.tags)}

    @property
    def chunk_labels(self):
        """Content labels, i.e. every label except O."""
        return self.labels[1:]

    def word_id(self, token):
        return self.word_index.get(normalize_word(token), OOV_INDEX)

    def hashes(self):
        return {
            "words": _digest(self.words),
            "chars": _digest(self.chars),
            "labels": _digest(self.labels),
            "tags": _digest(self.tags),
        }

    def oov_rate(self, sentences):
        total = sum(len(s) for s in sentences)
        if not total:
            return 0.0
        unseen = sum(1 for s in sentences for t in s.tokens if self.word_id(t) == OOV_INDEX)
        return unseen / total


def build_vocab(train_sentences, min_count=1):
    """Word, character, chunk-label and IOB-tag vocabularies from training data."""
    if not train_sentences:
        raise DomainError("cannot build a vocabulary from an empty training set")
    word_counts = Counter(normalize_word(t) for s in train_sentences for t in s.tokens)
    char_set = {ch for s in train_sentences for t in s.tokens for ch in normalize_chars(t)}
    label_set = {span.label for s in train_sentences for span in labeled_chunks(s.gold_tags)}

    words = [PAD_TOKEN, OOV_TOKEN] + sorted(
        w for w, c in word_counts.items() if c >= min_count and w not in (PAD_TOKEN, OOV_TOKEN)
    )
    chars = [PAD_TOKEN, OOV_TOKEN] + sorted(char_set)
    labels = [OUTSIDE] + sorted(label_set)
    tags = [OUTSIDE] + [f"{p}-{l}" for l in sorted(label_set) for p in ("B", "I")]
    vocab = Vocab(words, chars, labels, tags)
    logger.info(
        "vocabulary: %d words, %d chars, %d labels, %d tags",
        len(words), len(chars), len(labels), len(tags),
    )
    return vocab


# --- Splitting and statistics ---

def split_train_valid(sentences, fraction=0.1, seed=0):
    """
    Deterministic random holdout.

    The training side gets ceil(n * (1 - fraction)) sentences; both sides keep
    file order.
    """
    n = len(sentences)
    if n == 0:
        raise DomainError("cannot split an empty corpus")
    if not 0 < fraction < 1:
        raise DomainError(f"validation fraction must be in (0, 1), got {fraction}")
    n_valid = math.floor(n * Fraction(str(fraction)))
    order = np.random.default_rng(seed).permutation(n)
    valid_ids = set(order[:n_valid].tolist())
    train = [s for k, s in enumerate(sentences) if k not in valid_ids]
    valid = [s for k, s in enumerate(sentences) if k in valid_ids]
    return train, valid


def chunk_length_histogram(sentences):
    """Labeled-chunk counts and percentages per length bucket {1, 2, >=3}."""
    counts = Counter({bucket: 0 for bucket in LENGTH_BUCKETS})
    for sentence in sentences:
        for span in labeled_chunks(sentence.gold_tags):
            counts[length_bucket(span.length)] += 1
    total = sum(counts.values())
    rows = []
    for bucket in LENGTH_BUCKETS:
        percent = 100.0 * counts[bucket] / total if total else 0.0
        rows.append({"length": bucket, "count": counts[bucket], "percent": percent})
    return pd.DataFrame(rows).set_index("length")
