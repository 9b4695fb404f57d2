# src/models.py

"""
The four chunking architectures:

* ``baseline``: Bi-LSTM tagger over IOB-prefixed tags.
* ``model1``:   one Bi-LSTM for {I,O,B} segmentation and averaged-state chunk labeling.
* ``model2``:   Bi-LSTM encoder for segmentation, chunk-level LSTM decoder for labeling.
* ``model3``:   Bi-LSTM encoder, pointer-network segmentation, chunk-level decoder labeling.

Every forward pass returns a ``ChunkerOutput`` whose ``loss`` is the joint
objective (segmentation + labeling) when gold tags are used, and whose
``spans`` are the labeled chunks the model decided on.
"""

import logging
from dataclasses import dataclass, fields
from typing import List, Optional

import numpy as np

from src import autodiff as ad
from src import layers
from src.corpus import (
    OOV_INDEX,
    OUTSIDE,
    PAD_INDEX,
    ChunkSpan,
    chunks_to_iob,
    iob_to_chunks,
    repair_iob,
    split_long_spans,
    split_tag,
    strip_labels,
)
from src.errors import ConfigError, DomainError, StateError

logger = logging.getLogger(__name__)

VARIANTS = ("baseline", "model1", "model2", "model3")
SEG_CLASSES = ("I", "O", "B")
SEG_INDEX = {c: k for k, c in enumerate(SEG_CLASSES)}


@dataclass
class ModelConfig:
    variant: str = "model3"
    d_word: int = 50
    use_char_cnn: bool = False
    d_char: int = 30
    char_filters: int = 30
    char_window: int = 3
    d_hidden: int = 100
    d_decoder: int = 200
    dropout: float = 0.5
    context_window: int = 1
    chunk_filters: int = 0  # 0 means "same as d_word"
    chunk_window: int = 2
    max_chunk_length: int = 10
    d_length: int = 10
    d_pointer: int = 100
    lr0: float = 0.05
    decay: float = 1e-5
    epochs: int = 200
    seed: int = 1
    init_scale: float = 0.08
    freeze_word_embeddings: bool = False

    @property
    def n_chunk_filters(self):
        return self.chunk_filters or self.d_word

    @property
    def d_token(self):
        return self.d_word + (self.char_filters if self.use_char_cnn else 0)

    def validate(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant (expected one of {', '.join(VARIANTS)})", key="variant")
        if self.d_decoder != 2 * self.d_hidden:
            raise ConfigError(
                f"decoder width {self.d_decoder} must equal 2 * d_hidden = {2 * self.d_hidden}",
                key="d_decoder",
            )
        if self.max_chunk_length < 1:
            raise ConfigError("must be at least 1", key="max_chunk_length")
        if self.context_window < 1 or self.context_window % 2 == 0:
            raise ConfigError("must be a positive odd number", key="context_window")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("must be in [0, 1)", key="dropout")
        if self.lr0 <= 0:
            raise ConfigError("must be positive", key="lr0")
        if self.decay < 0:
            raise ConfigError("must be non-negative", key="decay")
        if self.epochs < 1:
            raise ConfigError("must be at least 1", key="epochs")
        for name in ("d_word", "d_hidden", "d_length", "d_pointer", "chunk_window", "char_window", "d_char", "char_filters"):
            if getattr(self, name) < 1:
                raise ConfigError("must be at least 1", key=name)
        return self

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


# --- Model containers ---

@dataclass
class PointerParams:
    W1: ad.Tensor
    W2: ad.Tensor
    W3: ad.Tensor
    W4: ad.Tensor
    v1: ad.Tensor
    v2: ad.Tensor
    lengths: layers.LengthEmbeddingTable


@dataclass
class Model:
    config: ModelConfig
    vocab: object
    store: ad.ParamStore
    word_table: layers.EmbeddingTable
    encoder_fwd: layers.LstmParams
    encoder_bwd: layers.LstmParams
    char_table: Optional[layers.EmbeddingTable] = None
    char_cnn: Optional[layers.CnnParams] = None
    tag_head: Optional[layers.LinearHead] = None
    seg_head: Optional[layers.LinearHead] = None
    label_head: Optional[layers.LinearHead] = None
    chunk_cnn: Optional[layers.CnnParams] = None
    decoder: Optional[layers.LstmParams] = None
    pointer: Optional[PointerParams] = None

    @property
    def variant(self):
        return self.config.variant


@dataclass
class ChunkFeatures:
    cx: ad.Tensor
    ch: ad.Tensor
    cw: ad.Tensor

    def joined(self):
        return ad.op_concat([self.cx, self.ch, self.cw])


@dataclass
class DecodeState:
    j: int
    h: ad.Tensor
    c: ad.Tensor
    b: int

    def terminal(self, sentence_length):
        return self.b == sentence_length


@dataclass
class Encoding:
    states: List[ad.Tensor]
    words: List[ad.Tensor]
    summary: ad.Tensor
    pad: ad.Tensor

    def __len__(self):
        return len(self.states)


@dataclass
class ChunkerOutput:
    loss: ad.Tensor
    seg_loss: ad.Tensor
    label_loss: ad.Tensor
    spans: List[ChunkSpan]

    def tags(self, sentence_length):
        return chunks_to_iob(self.spans, sentence_length)


def build_model(config, vocab):
    """Allocate every parameter block the configured variant needs."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    scale = config.init_scale
    store = ad.ParamStore()
    word_table = layers.make_embedding(
        store, "embed.words", vocab.word_index, config.d_word, rng,
        oov_index=OOV_INDEX, pad_index=PAD_INDEX, scale=scale,
        requires_grad=not config.freeze_word_embeddings,
    )
    model = Model(
        config, vocab, store, word_table,
        encoder_fwd=None, encoder_bwd=None,
    )
    if config.use_char_cnn:
        model.char_table = layers.make_embedding(
            store, "embed.chars", vocab.char_index, config.d_char, rng,
            oov_index=OOV_INDEX, pad_index=PAD_INDEX, scale=scale,
        )
        model.char_cnn = layers.make_cnn(store, "char_cnn", config.d_char, config.char_filters, config.char_window, rng, scale)

    d_h = config.d_hidden
    model.encoder_fwd = layers.make_lstm(store, "encoder.fwd", config.d_token, d_h, rng, scale)
    model.encoder_bwd = layers.make_lstm(store, "encoder.bwd", config.d_token, d_h, rng, scale)

    if config.variant == "baseline":
        model.tag_head = layers.make_head(store, "tagger", 2 * d_h, len(vocab.tags), rng, scale)
        return model

    if config.variant in ("model1", "model2"):
        model.seg_head = layers.make_head(store, "segment", 2 * d_h, len(SEG_CLASSES), rng, scale)
    if config.variant == "model1":
        model.label_head = layers.make_head(store, "label", 2 * d_h, max(len(vocab.chunk_labels), 1), rng, scale)
        return model

    m = config.n_chunk_filters
    d_in = m + 2 * d_h + config.context_window * config.d_word
    model.chunk_cnn = layers.make_cnn(store, "chunk_cnn", config.d_word, m, config.chunk_window, rng, scale)
    model.decoder = layers.make_lstm(store, "decoder", d_in, config.d_decoder, rng, scale)
    model.label_head = layers.make_head(store, "label", config.d_decoder, len(vocab.labels), rng, scale)

    if config.variant == "model3":
        d_p, d_w = config.d_pointer, config.d_word
        u = lambda shape: rng.uniform(-scale, scale, size=shape)
        model.pointer = PointerParams(
            W1=store.add("pointer.W1", u((d_p, 2 * d_h))),
            W2=store.add("pointer.W2", u((d_p, d_w))),
            W3=store.add("pointer.W3", u((d_p, d_w))),
            W4=store.add("pointer.W4", u((d_p, config.d_decoder))),
            v1=store.add("pointer.v1", u(d_p)),
            v2=store.add("pointer.v2", u(config.d_length)),
            lengths=layers.make_length_embedding(store, "pointer.LE", config.max_chunk_length, config.d_length, rng, scale),
        )
    return model


# --- Shared pieces ---

def _drop(model, x, mode, rng):
    return layers.dropout_apply(x, model.config.dropout, mode, rng)


def embed_token(model, token):
    """Returns (encoder input vector, word embedding)."""
    word = model.word_table.lookup(model.vocab.word_id(token))
    if model.char_cnn is None:
        return word, word
    chars = layers.char_cnn_embed(model.char_cnn, model.char_table, token)
    return ad.op_concat([word, chars]), word


def encode(model, sentence, mode="eval", rng=None):
    """Embed tokens and run the Bi-LSTM encoder, dropout on its input and output."""
    if len(sentence) == 0:
        raise DomainError("cannot encode an empty sentence")
    inputs, words = [], []
    for token in sentence.tokens:
        x, w = embed_token(model, token)
        inputs.append(_drop(model, x, mode, rng))
        words.append(w)
    run = layers.bilstm_run(model.encoder_fwd, model.encoder_bwd, inputs)
    states = [_drop(model, h, mode, rng) for h in run.states]
    pad = model.word_table.lookup(PAD_INDEX)
    return Encoding(states, words, run.summary, pad)


def gold_spans(sentence):
    return iob_to_chunks(repair_iob(sentence.gold_tags))


def context_embeddings(enc, span, window):
    """Cw: window//2 words left of the chunk, its first word, window//2 words right of its last word."""
    half = window // 2
    positions = list(range(span.begin - half, span.begin + 1)) + list(range(span.last + 1, span.last + 1 + half))
    T = len(enc)
    return ad.op_concat([enc.words[k] if 0 <= k < T else enc.pad for k in positions])


def chunk_features(model, enc, span):
    cx = layers.cnnmax(model.chunk_cnn, enc.words[span.begin:span.end])
    ch = ad.op_average_rows(ad.op_stack(enc.states[span.begin:span.end]))
    cw = context_embeddings(enc, span, model.config.context_window)
    return ChunkFeatures(cx, ch, cw)


def joint_loss(seg_loss, label_loss):
    """L = L_segmentation + L_labeling."""
    return ad.add(seg_loss, label_loss)


def _label_index(model, label):
    index = model.vocab.label_index.get(label)
    if index is None:
        raise DomainError(f"gold label '{label}' is not in the label vocabulary")
    return index


def _segment_from_probs(seg_probs):
    """Arg-max {I,O,B} per token, repaired, turned into unlabeled spans."""
    seg_tags = repair_iob([SEG_CLASSES[int(np.argmax(p.values))] for p in seg_probs])
    return iob_to_chunks(seg_tags)


def _seg_loss(seg_probs, sentence):
    gold = strip_labels(repair_iob(sentence.gold_tags))
    return ad.op_mean([ad.op_cross_entropy(p, SEG_INDEX[g]) for p, g in zip(seg_probs, gold)])


# --- Baseline ---

def baseline_forward(model, sentence, mode="eval", rng=None, use_gold=True):
    """Per-token softmax over the IOB tag vocabulary; loss is mean token cross-entropy."""
    enc = encode(model, sentence, mode, rng)
    tag_probs = [layers.classify(model.tag_head, h) for h in enc.states]
    predicted = repair_iob([model.vocab.tags[int(np.argmax(p.values))] for p in tag_probs])
    spans = iob_to_chunks(predicted)
    if not use_gold:
        zero = ad.Tensor(0.0)
        return ChunkerOutput(zero, zero, zero, spans)
    gold = repair_iob(sentence.gold_tags)
    terms = []
    for p, tag in zip(tag_probs, gold):
        index = model.vocab.tag_index.get(tag)
        if index is None:
            raise DomainError(f"gold tag '{tag}' is not in the tag vocabulary")
        terms.append(ad.op_cross_entropy(p, index))
    loss = ad.op_mean(terms)
    return ChunkerOutput(loss, loss, ad.Tensor(0.0), spans)


# --- Model I ---

def model1_forward(model, sentence, mode="eval", rng=None, use_gold=True):
    """
    Shared Bi-LSTM: {I,O,B} segmentation per token, then each chunk labeled
    from the average of its encoder states. O spans are emitted as O.
    """
    enc = encode(model, sentence, mode, rng)
    seg_probs = [layers.classify(model.seg_head, h) for h in enc.states]
    spans = gold_spans(sentence) if use_gold else _segment_from_probs(seg_probs)
    chunk_labels = model.vocab.chunk_labels

    labeled, label_terms = [], []
    for span in spans:
        if span.is_outside:
            labeled.append(span)
            continue
        ch = ad.op_average_rows(ad.op_stack(enc.states[span.begin:span.end]))
        probs = layers.classify(model.label_head, ch)
        if use_gold:
            label_terms.append(ad.op_cross_entropy(probs, _label_index(model, span.label) - 1))
            labeled.append(span)
        else:
            label = chunk_labels[int(np.argmax(probs.values))] if chunk_labels else OUTSIDE
            labeled.append(ChunkSpan(span.begin, span.length, label))

    if not use_gold:
        zero = ad.Tensor(0.0)
        return ChunkerOutput(zero, zero, zero, _expand_outside(labeled))
    seg_loss = _seg_loss(seg_probs, sentence)
    label_loss = ad.op_mean(label_terms)
    return ChunkerOutput(joint_loss(seg_loss, label_loss), seg_loss, label_loss, labeled)


def _expand_outside(spans):
    """Spans labeled O are split into per-token O spans."""
    out = []
    for span in spans:
        if span.is_outside and span.length > 1:
            out.extend(ChunkSpan(k, 1, OUTSIDE) for k in range(span.begin, span.end))
        else:
            out.append(span)
    return out


# --- Model II ---

def _decoder_start(model, enc):
    return DecodeState(0, enc.summary, ad.Tensor(np.zeros(model.config.d_decoder)), 0)


def _decoder_advance(model, enc, state, span, mode, rng):
    """Feed one chunk to the decoder; returns (new state, label distribution)."""
    feats = chunk_features(model, enc, span)
    x = _drop(model, feats.joined(), mode, rng)
    h, c = layers.lstm_step(model.decoder, x, state.h, state.c)
    probs = layers.classify(model.label_head, _drop(model, h, mode, rng))
    return DecodeState(state.j + 1, h, c, span.end), probs


def model2_forward(model, sentence, mode="eval", rng=None, use_gold=True):
    """Encoder segmentation as in Model I; chunk labels from an LSTM decoder over [Cx; Ch; Cw]."""
    enc = encode(model, sentence, mode, rng)
    seg_probs = [layers.classify(model.seg_head, h) for h in enc.states]
    spans = gold_spans(sentence) if use_gold else _segment_from_probs(seg_probs)

    state = _decoder_start(model, enc)
    labeled, label_terms = [], []
    for span in spans:
        state, probs = _decoder_advance(model, enc, state, span, mode, rng)
        if use_gold:
            label_terms.append(ad.op_cross_entropy(probs, _label_index(model, span.label)))
            labeled.append(span)
        else:
            label = model.vocab.labels[int(np.argmax(probs.values))]
            labeled.append(ChunkSpan(span.begin, span.length, label))

    if not use_gold:
        zero = ad.Tensor(0.0)
        return ChunkerOutput(zero, zero, zero, _expand_outside(labeled))
    seg_loss = _seg_loss(seg_probs, sentence)
    label_loss = ad.op_mean(label_terms)
    return ChunkerOutput(joint_loss(seg_loss, label_loss), seg_loss, label_loss, labeled)


# --- Model III ---

def pointer_projections(pointer, enc):
    """W1 h_i + W2 x_i for every position, as a [T x d_p] matrix."""
    hs = ad.op_matmul(ad.op_stack(enc.states), ad.op_transpose(pointer.W1))
    xs = ad.op_matmul(ad.op_stack(enc.words), ad.op_transpose(pointer.W2))
    return ad.add(hs, xs)


def pointer_scores(pointer, state, enc, max_length, projections=None):
    """
    Distribution over the end of the chunk starting at ``state.b``.

    Candidates are ``range(b, min(b + max_length, T))``; returns the candidate
    range and the softmax over exactly those candidates.
    """
    T = len(enc)
    b = state.b
    if b >= T:
        raise StateError(f"no chunk can start at {b} in a sentence of length {T}")
    end = min(b + max_length, T)
    if projections is None:
        projections = pointer_projections(pointer, enc)
    query = ad.add(ad.op_matmul(pointer.W3, enc.words[b]), ad.op_matmul(pointer.W4, state.h))
    hidden = ad.tanh(ad.op_add_bias(ad.op_slice_rows(projections, b, end), query))
    length_scores = ad.op_matmul(pointer.lengths.rows(end - b), pointer.v2)
    scores = ad.add(ad.op_matmul(hidden, pointer.v1), length_scores)
    return range(b, end), ad.op_softmax(scores)


def model3_decode(model, sentence, mode="eval", rng=None, use_gold=True):
    """
    Greedy segment-then-label loop: the pointer picks the end of the chunk that
    starts at b, the decoder consumes the chunk and labels it, b moves past it.
    With gold tags the gold ends and labels are forced and their cross-entropies
    collected.
    """
    enc = encode(model, sentence, mode, rng)
    T = len(enc)
    l_m = model.config.max_chunk_length
    forced = None
    if use_gold:
        spans = gold_spans(sentence)
        forced = split_long_spans(spans, l_m)
        if len(forced) != len(spans):
            logger.warning(
                "sentence %s: %d gold chunks longer than %d were split",
                sentence.id, len(forced) - len(spans), l_m,
            )

    projections = pointer_projections(model.pointer, enc)
    state = _decoder_start(model, enc)
    decoded, seg_terms, label_terms = [], [], []
    while not state.terminal(T):
        candidates, probs = pointer_scores(model.pointer, state, enc, l_m, projections)
        if use_gold:
            target = forced[state.j]
            seg_terms.append(ad.op_cross_entropy(probs, target.last - state.b))
            last = target.last
        else:
            last = candidates[int(np.argmax(probs.values))]
        span = ChunkSpan(state.b, last - state.b + 1, "")
        state, label_probs = _decoder_advance(model, enc, state, span, mode, rng)
        if use_gold:
            label_terms.append(ad.op_cross_entropy(label_probs, _label_index(model, target.label)))
            label = target.label
        else:
            label = model.vocab.labels[int(np.argmax(label_probs.values))]
        decoded.append(ChunkSpan(span.begin, span.length, label))

    if not use_gold:
        zero = ad.Tensor(0.0)
        return ChunkerOutput(zero, zero, zero, _expand_outside(decoded))
    seg_loss = ad.op_mean(seg_terms)
    label_loss = ad.op_mean(label_terms)
    return ChunkerOutput(joint_loss(seg_loss, label_loss), seg_loss, label_loss, decoded)


# --- Dispatch ---

FORWARDS = {
    "baseline": baseline_forward,
    "model1": model1_forward,
    "model2": model2_forward,
    "model3": model3_decode,
}


def forward(model, sentence, mode="eval", rng=None, use_gold=True):
    return FORWARDS[model.variant](model, sentence, mode=mode, rng=rng, use_gold=use_gold)


def predict_tags(model, sentence):
    """Greedy inference with dropout off; always a valid IOB sequence."""
    with ad.no_tape():
        output = forward(model, sentence, mode="eval", use_gold=False)
    return output.tags(len(sentence))
