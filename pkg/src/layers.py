# src/layers.py

"""
Neural building blocks shared by every model variant: embedding tables,
LSTM / Bi-LSTM, the CNNMax chunk featuriser, the character CNN,
inverted dropout and softmax classification heads.
"""

import logging
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from src import autodiff as ad
from src.errors import DimensionError, DomainError, ParseError

logger = logging.getLogger(__name__)

GATES = ("i", "f", "o", "g")
DEFAULT_INIT_SCALE = 0.08
FORGET_BIAS = 1.0

_DIGITS = re.compile(r"[0-9]")


# --- Token normalisation ---

def normalize_word(token):
    """Key used for word-embedding lookup: lowercased, every digit mapped to '0'."""
    return _DIGITS.sub("0", token.lower())


def normalize_chars(token):
    """Key used by the character CNN: case preserved, every digit mapped to '0'."""
    return _DIGITS.sub("0", token)


def _uniform(rng, shape, scale):
    return rng.uniform(-scale, scale, size=shape)


# --- Parameter containers ---

@dataclass
class LstmParams:
    W: Dict[str, ad.Tensor]
    U: Dict[str, ad.Tensor]
    b: Dict[str, ad.Tensor]
    d_x: int
    d_h: int


@dataclass
class EmbeddingTable:
    table: ad.Tensor
    oov_index: int
    pad_index: Optional[int] = None
    vocabulary: Dict[str, int] = field(default_factory=dict)

    @property
    def dim(self):
        return self.table.shape[1]

    def index_of(self, key):
        return self.vocabulary.get(key, self.oov_index)

    def lookup(self, index):
        return ad.op_lookup(self.table, index)


@dataclass
class CnnParams:
    filters: ad.Tensor
    bias: ad.Tensor
    window: int

    @property
    def n_filters(self):
        return self.filters.shape[0]

    @property
    def d_in(self):
        return self.filters.shape[1] // self.window


@dataclass
class LengthEmbeddingTable:
    table: ad.Tensor

    @property
    def max_length(self):
        return self.table.shape[0]

    def rows(self, count):
        """Embeddings of chunk lengths 1..count as a [count x d_LE] matrix."""
        return ad.op_slice_rows(self.table, 0, count)


@dataclass
class LinearHead:
    W: ad.Tensor
    b: ad.Tensor

    @property
    def n_labels(self):
        return self.W.shape[0]


# --- Factories (register parameters in a ParamStore) ---

def make_lstm(store, prefix, d_x, d_h, rng, scale=DEFAULT_INIT_SCALE):
    W, U, b = {}, {}, {}
    for gate in GATES:
        W[gate] = store.add(f"{prefix}.W_{gate}", _uniform(rng, (d_h, d_x), scale))
        U[gate] = store.add(f"{prefix}.U_{gate}", _uniform(rng, (d_h, d_h), scale))
        bias = np.full(d_h, FORGET_BIAS) if gate == "f" else np.zeros(d_h)
        b[gate] = store.add(f"{prefix}.b_{gate}", bias)
    return LstmParams(W, U, b, d_x, d_h)


def make_embedding(store, name, vocabulary, dim, rng, oov_index, pad_index=None,
                   scale=DEFAULT_INIT_SCALE, requires_grad=True):
    size = max(vocabulary.values(), default=-1) + 1
    size = max(size, oov_index + 1, (pad_index or 0) + 1)
    table = store.add(name, _uniform(rng, (size, dim), scale), requires_grad=requires_grad)
    return EmbeddingTable(table, oov_index, pad_index, dict(vocabulary))


def make_cnn(store, prefix, d_in, n_filters, window, rng, scale=DEFAULT_INIT_SCALE):
    if window < 1 or n_filters < 1:
        raise DomainError(f"CNN needs window >= 1 and filters >= 1, got {window} and {n_filters}")
    filters = store.add(f"{prefix}.filters", _uniform(rng, (n_filters, window * d_in), scale))
    bias = store.add(f"{prefix}.bias", np.zeros(n_filters))
    return CnnParams(filters, bias, window)


def make_length_embedding(store, name, max_length, dim, rng, scale=DEFAULT_INIT_SCALE):
    return LengthEmbeddingTable(store.add(name, _uniform(rng, (max_length, dim), scale)))


def make_head(store, prefix, d_in, n_labels, rng, scale=DEFAULT_INIT_SCALE):
    W = store.add(f"{prefix}.W", _uniform(rng, (n_labels, d_in), scale))
    b = store.add(f"{prefix}.b", np.zeros(n_labels))
    return LinearHead(W, b)


# --- Recurrent layers ---

def lstm_step(p, x_t, h_prev, c_prev):
    """One LSTM step; returns ``(h_t, c_t)``."""
    if x_t.shape != (p.d_x,) or h_prev.shape != (p.d_h,) or c_prev.shape != (p.d_h,):
        raise DimensionError(
            f"lstm_step: got x {x_t.shape}, h {h_prev.shape}, c {c_prev.shape} "
            f"for d_x={p.d_x}, d_h={p.d_h}"
        )
    pre = {
        gate: ad.add(ad.add(ad.op_matmul(p.W[gate], x_t), ad.op_matmul(p.U[gate], h_prev)), p.b[gate])
        for gate in GATES
    }
    i_t = ad.sigmoid(pre["i"])
    f_t = ad.sigmoid(pre["f"])
    o_t = ad.sigmoid(pre["o"])
    g_t = ad.tanh(pre["g"])
    c_t = ad.add(ad.mul(f_t, c_prev), ad.mul(i_t, g_t))
    h_t = ad.mul(o_t, ad.tanh(c_t))
    return h_t, c_t


@dataclass
class BiLstmRun:
    states: List[ad.Tensor]
    last_forward: ad.Tensor
    first_backward: ad.Tensor

    @property
    def summary(self):
        """[forward h_T ; backward h_1], the sentence representation for a decoder."""
        return ad.op_concat([self.last_forward, self.first_backward])


def _run_direction(p, xs):
    h = ad.Tensor(np.zeros(p.d_h))
    c = ad.Tensor(np.zeros(p.d_h))
    outputs = []
    for x_t in xs:
        h, c = lstm_step(p, x_t, h, c)
        outputs.append(h)
    return outputs


def bilstm_run(fwd, bwd, xs):
    """
    Run a Bi-LSTM over ``xs`` from zero initial states.

    Returns per-step ``[forward h_t ; backward h_t]`` states together with
    forward h_T and backward h_1.
    """
    if not xs:
        raise DomainError("Bi-LSTM over an empty sequence")
    if fwd.d_x != bwd.d_x:
        raise DimensionError(f"Bi-LSTM directions disagree on input width: {fwd.d_x} vs {bwd.d_x}")
    forward = _run_direction(fwd, xs)
    backward = _run_direction(bwd, list(reversed(xs)))[::-1]
    states = [ad.op_concat([f, b]) for f, b in zip(forward, backward)]
    return BiLstmRun(states, forward[-1], backward[0])


# --- Convolutional layers ---

def cnnmax(p, word_vectors):
    """
    Convolution + tanh + max-over-time over a sequence of vectors.

    Sequences shorter than the filter window are zero-padded on the right.
    """
    if not word_vectors:
        raise DomainError("CNNMax over an empty sequence")
    d_in = word_vectors[0].size
    if d_in != p.d_in:
        raise DimensionError(f"CNNMax filters expect width {p.d_in}, got {d_in}")
    rows = list(word_vectors)
    while len(rows) < p.window:
        rows.append(ad.Tensor(np.zeros(d_in)))
    windows = ad.op_windows(ad.op_stack(rows), p.window)
    responses = ad.op_add_bias(ad.op_matmul(windows, ad.op_transpose(p.filters)), p.bias)
    return ad.op_max_over_time(ad.tanh(responses))


def char_cnn_embed(p, char_table, word):
    """Character-CNN representation of ``word`` (raw case, digits normalised)."""
    chars = normalize_chars(word)
    if chars:
        indices = [char_table.index_of(ch) for ch in chars]
    else:
        indices = [char_table.oov_index]
    return cnnmax(p, [char_table.lookup(k) for k in indices])


# --- Regularisation and output layers ---

def dropout_apply(x, rate, mode, rng):
    """Inverted dropout; the identity in eval mode or at rate 0."""
    if not 0.0 <= rate < 1.0:
        raise DomainError(f"dropout rate must be in [0, 1), got {rate}")
    if mode == "eval" or rate == 0.0:
        return x
    if mode != "train":
        raise DomainError(f"unknown dropout mode '{mode}'")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return ad.mul(x, ad.Tensor(keep))


def classify(head, features):
    """softmax(W . features + b)."""
    if features.shape != (head.W.shape[1],):
        raise DimensionError(f"head expects features of width {head.W.shape[1]}, got {features.shape}")
    return ad.op_softmax(ad.add(ad.op_matmul(head.W, features), head.b))


# --- Pretrained embeddings ---

def load_embeddings(lines, source="<embeddings>"):
    """
    Parse ``word v1 v2 ... vd`` lines into ``({word: vector}, d)``.

    The dimension is taken from the first non-blank line; any later line with
    a different width or a non-numeric value is a ParseError.
    """
    vectors = {}
    dim = None
    for lineno, line in enumerate(lines, start=1):
        fields = line.split()
        if not fields:
            continue
        word, values = fields[0], fields[1:]
        if dim is None:
            if not values:
                raise ParseError("embedding line has no values", source, lineno)
            dim = len(values)
        if len(values) != dim:
            raise ParseError(f"expected {dim} values, found {len(values)}", source, lineno)
        try:
            vectors[word] = np.array([float(v) for v in values])
        except ValueError as e:
            raise ParseError(f"non-numeric embedding value ({e})", source, lineno) from None
    return vectors, (dim or 0)


def load_embedding_file(path):
    with open(path, encoding="utf-8") as f:
        return load_embeddings(f, source=str(path))


def apply_pretrained(table, vectors):
    """Copy pretrained vectors into matching rows of ``table``; returns rows set."""
    copied = 0
    for word, vector in vectors.items():
        if vector.shape != (table.dim,):
            raise DimensionError(f"pretrained vector width {vector.shape[0]} != embedding width {table.dim}")
        index = table.vocabulary.get(normalize_word(word))
        if index is None:
            continue
        table.table.values[index] = vector
        copied += 1
    skipped = len(vectors) - copied
    if skipped:
        logger.warning("%d pretrained vectors have no vocabulary entry and were skipped", skipped)
    logger.info("initialised %d word embeddings from pretrained vectors", copied)
    return copied
