from pathlib import Path

import numpy as np
import pytest

from src.corpus import ChunkSpan, Sentence, build_vocab, chunks_to_iob, read_conll
from src.models import ModelConfig

ROOT = Path(__file__).resolve().parent.parent
TOY_CORPUS = ROOT / "data" / "toy_chunking.txt"
FIXTURES = Path(__file__).resolve().parent / "fixtures"

LABELS = ("NP", "VP", "PP", "ADJP")

_LEXICON = {
    "DT": ["the", "a", "this", "every"],
    "JJ": ["big", "small", "red", "old", "quiet", "new"],
    "NN": ["cat", "dog", "house", "tree", "river", "car", "book", "city"],
    "PRP": ["he", "she", "it", "they"],
    "VBD": ["saw", "found", "liked", "left", "sold"],
    "MD": ["will", "could", "must"],
    "VB": ["see", "find", "sell"],
    "IN": ["in", "near", "under", "with"],
    "RB": ["very", "quite"],
}


def make_sentence(tags, tokens=None, sid=0):
    tokens = tokens or [f"w{k}" for k in range(len(tags))]
    return Sentence(list(tokens), list(tags), sid)


def _np(rng):
    if rng.random() < 0.25:
        return [("PRP", "B-NP")]
    words = [("DT", "B-NP")]
    if rng.random() < 0.5:
        words.append(("JJ", "I-NP"))
    words.append(("NN", "I-NP"))
    return words


def synthetic_corpus(n, seed=0):
    """Sentences from a small NP VP (PP NP) (ADJP) grammar with chunk lengths 1-3."""
    rng = np.random.default_rng(seed)
    sentences = []
    for sid in range(n):
        parts = _np(rng)
        parts += [("MD", "B-VP"), ("VB", "I-VP")] if rng.random() < 0.3 else [("VBD", "B-VP")]
        if rng.random() < 0.7:
            parts += _np(rng)
        if rng.random() < 0.4:
            parts += [("IN", "B-PP")] + _np(rng)
        elif rng.random() < 0.3:
            parts += [("RB", "B-ADJP"), ("JJ", "I-ADJP")]
        tokens = [str(rng.choice(_LEXICON[pos])) for pos, _ in parts] + ["."]
        tags = [tag for _, tag in parts] + ["O"]
        sentences.append(Sentence(tokens, tags, sid))
    return sentences


def random_tags(rng, length, labels=LABELS, max_length=3, outside=0.3):
    """A valid (repaired) random IOB sequence."""
    spans, k = [], 0
    while k < length:
        if rng.random() < outside:
            spans.append(ChunkSpan(k, 1, "O"))
            k += 1
            continue
        size = int(rng.integers(1, min(max_length, length - k) + 1))
        spans.append(ChunkSpan(k, size, str(rng.choice(labels))))
        k += size
    return chunks_to_iob(spans, length)


def small_config(variant, /, **overrides):
    settings = dict(
        variant=variant, d_word=6, d_hidden=5, d_decoder=10, d_pointer=6, d_length=3,
        context_window=3, max_chunk_length=3, dropout=0.0, epochs=2, seed=3,
        lr0=0.1, decay=0.0, init_scale=0.3,
    )
    settings.update(overrides)
    return ModelConfig(**settings)


@pytest.fixture(scope="session")
def toy_sentences():
    return read_conll(TOY_CORPUS, "chunking3col")


@pytest.fixture(scope="session")
def toy_vocab(toy_sentences):
    return build_vocab(toy_sentences)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
