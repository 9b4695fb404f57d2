# src/training.py

"""
Training and inference drivers.

Training is plain single-sentence SGD over a per-epoch shuffle. After every
epoch the model is scored on the validation set and the parameters with
the best validation F1 are kept (and written as ``best.ckpt`` when a
checkpoint directory is given).
"""

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from src import autodiff as ad
from src.checkpoint import load_checkpoint, save_checkpoint
from src.corpus import ChunkSpan, Sentence, build_vocab, chunks_to_iob
from src.errors import ConfigError, DivergenceError, DomainError, NonFiniteError
from src.evaluation import chunk_f1, segment_f1
from src.layers import apply_pretrained
from src.models import ModelConfig, build_model, forward, predict_tags

logger = logging.getLogger(__name__)

OOV_WARNING_RATE = 0.5
GRADCHECK_PARAM_LIMIT = 100_000
GRADCHECK_TOLERANCE = 1e-4


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    valid_f1: float
    valid_segment_f1: float
    lr: float

    def log_line(self):
        return (
            f"epoch {self.epoch:4d}  loss {self.train_loss:.6f}  valid F1 {self.valid_f1:6.2f}  "
            f"seg-F1 {self.valid_segment_f1:6.2f}  lr {self.lr:.6g}"
        )


@dataclass
class TrainResult:
    model: object
    epochs: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_f1: float = -1.0
    best_path: Optional[Path] = None
    final_path: Optional[Path] = None

    def log_frame(self):
        return pd.DataFrame([asdict(r) for r in self.epochs], columns=list(EpochRecord.__dataclass_fields__))


# --- Inference ---

def _resolve_model(model_or_path, expected_variant=None, expected_vocab=None):
    if isinstance(model_or_path, (str, Path)):
        return load_checkpoint(model_or_path, expected_variant, expected_vocab)
    return model_or_path


def predict(model_or_path, sentences, workers=1, expected_variant=None):
    """
    IOB tag sequences for ``sentences``, in input order.

    Accepts a model or a checkpoint path. Parameters are only read, so
    sentences may be decoded on a thread pool.
    """
    model = _resolve_model(model_or_path, expected_variant)
    if workers > 1 and len(sentences) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda s: predict_tags(model, s), sentences))
    return [predict_tags(model, s) for s in sentences]


def evaluate_model(model, sentences, workers=1):
    """Returns ``(chunk report, segment report, predicted tags)``."""
    rate = model.vocab.oov_rate(sentences)
    if rate > OOV_WARNING_RATE:
        logger.warning("%.1f%% of evaluation tokens are out of vocabulary", 100.0 * rate)
    predicted = predict(model, sentences, workers)
    gold = [s.gold_tags for s in sentences]
    return chunk_f1(gold, predicted, workers), segment_f1(gold, predicted, workers), predicted


# --- Training ---

def echo_config(settings):
    """Log the resolved configuration, one key=value per line."""
    for key, value in settings.items():
        logger.info("config %s=%s", key, value)


def _sgd_pass(model, sentence, epoch, rng):
    """One update on one sentence; returns ``(loss, learning rate applied)``."""
    store = model.store
    try:
        with ad.Tape() as tape:
            output = forward(model, sentence, mode="train", rng=rng)
    except NonFiniteError:
        raise DivergenceError(epoch, sentence.id, math.nan) from None
    loss = output.loss.item()
    if not math.isfinite(loss):
        raise DivergenceError(epoch, sentence.id, loss)
    if tape.produced(output.loss):
        ad.backward(output.loss, tape, store)
    else:
        store.zero_grad()
    lr_t = ad.sgd_step(store, model.config.lr0, model.config.decay)
    if not store.all_finite():
        raise DivergenceError(epoch, sentence.id, loss)
    return loss, lr_t


def train(config, train_set, valid_set, checkpoint_dir=None, embeddings=None, vocab=None, workers=1):
    """
    Train ``config.variant`` on ``train_set`` for ``config.epochs`` epochs.

    ``embeddings`` is an optional ``{word: vector}`` mapping used to
    initialise the word table. Returns a TrainResult whose model holds the
    best-validation parameters.
    """
    if not train_set:
        raise DomainError("training set is empty")
    if not valid_set:
        raise DomainError("validation set is empty")
    config.validate()
    vocab = vocab or build_vocab(train_set)
    model = build_model(config, vocab)
    if embeddings:
        apply_pretrained(model.word_table, embeddings)
    logger.info(
        "training %s: %d train / %d valid sentences, %d parameters",
        config.variant, len(train_set), len(valid_set), model.store.num_parameters(),
    )

    checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir else None
    result = TrainResult(model)
    best_snapshot = None
    rng = np.random.default_rng(config.seed)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_set))
        losses, lr = [], config.lr0
        for k in order:
            loss, lr = _sgd_pass(model, train_set[k], epoch, rng)
            losses.append(loss)
        try:
            chunk_report, segment_report, _ = evaluate_model(model, valid_set, workers)
        except NonFiniteError:
            raise DivergenceError(epoch, None, math.nan) from None
        record = EpochRecord(epoch, float(np.mean(losses)), chunk_report.f1, segment_report.f1, lr)
        result.epochs.append(record)
        logger.info(record.log_line())

        if record.valid_f1 > result.best_f1:
            result.best_f1 = record.valid_f1
            result.best_epoch = epoch
            best_snapshot = model.store.snapshot()
            if checkpoint_dir is not None:
                result.best_path = save_checkpoint(model, checkpoint_dir / "best.ckpt")

    if checkpoint_dir is not None:
        result.final_path = save_checkpoint(model, checkpoint_dir / "final.ckpt")
        result.log_frame().to_csv(checkpoint_dir / "epochs.tsv", sep="\t", index=False)
    model.store.restore(best_snapshot)
    logger.info("best valid F1 %.2f at epoch %d", result.best_f1, result.best_epoch)
    return result


def grid_search(config, grid, train_set, valid_set, embeddings=None, workers=1):
    """
    Train every point of the Cartesian product of ``grid`` (``{key: [values]}``)
    in order and tabulate the best validation F1 of each, best first.
    """
    keys = list(grid)
    vocab = build_vocab(train_set)
    rows = []
    for values in itertools.product(*(grid[k] for k in keys)):
        point = dict(zip(keys, values))
        logger.info("grid point %s", " ".join(f"{k}={v}" for k, v in point.items()))
        result = train(replace(config, **point), train_set, valid_set,
                       embeddings=embeddings, vocab=vocab, workers=workers)
        rows.append({**point, "best_epoch": result.best_epoch, "valid_f1": result.best_f1})
    table = pd.DataFrame(rows)
    # stable sort keeps grid order among ties
    return table.sort_values("valid_f1", ascending=False, kind="mergesort").reset_index(drop=True)


# --- Gradient verification ---

GRADCHECK_DIMS = {
    "d_word": 4,
    "d_hidden": 3,
    "d_pointer": 4,
    "d_length": 3,
    "d_char": 3,
    "char_filters": 3,
    "context_window": 3,
    "max_chunk_length": 3,
}


def _random_tags(rng, length, labels):
    spans, k = [], 0
    while k < length:
        size = int(rng.integers(1, min(3, length - k) + 1))
        label = "O" if rng.random() < 0.3 else str(rng.choice(labels))
        if label == "O":
            size = 1
        spans.append(ChunkSpan(k, size, label))
        k += size
    return chunks_to_iob(spans, length)


def toy_problem(variant, dims=None, seed=0, length=5, use_char_cnn=True, freeze_word_embeddings=False):
    """A small random model and one random 5-token sentence for gradient checks."""
    unknown = sorted(set(dims or {}) - set(GRADCHECK_DIMS) - {"d_hidden", "chunk_filters", "chunk_window", "char_window"})
    if unknown:
        raise ConfigError(f"unknown dimension keys: {', '.join(unknown)}", key="dims")
    settings = {**GRADCHECK_DIMS, **(dims or {})}
    settings["d_decoder"] = 2 * settings["d_hidden"]
    config = ModelConfig(
        variant=variant, dropout=0.0, init_scale=0.5, seed=seed,
        use_char_cnn=use_char_cnn, freeze_word_embeddings=freeze_word_embeddings, **settings,
    ).validate()
    rng = np.random.default_rng(seed)
    words = [f"tok{k}" for k in range(6)]
    labels = ["NP", "VP"]
    tokens = [str(rng.choice(words)) for _ in range(length)]
    sentence = Sentence(tokens, _random_tags(rng, length, labels), id=0)
    vocab = build_vocab([Sentence(list(words), ["B-NP", "B-VP"] + ["O"] * (len(words) - 2))])
    return build_model(config, vocab), sentence


def gradient_check(variant, dims=None, seed=0, samples=None, freeze_word_embeddings=False):
    """
    Max relative error per parameter block between backprop and central
    differences on a toy model; frozen blocks map to None.
    """
    model, sentence = toy_problem(variant, dims, seed, freeze_word_embeddings=freeze_word_embeddings)
    total = model.store.num_parameters()
    if total >= GRADCHECK_PARAM_LIMIT:
        raise ConfigError(f"gradient check needs fewer than {GRADCHECK_PARAM_LIMIT} parameters, got {total}", key="dims")

    def loss():
        return forward(model, sentence, mode="eval", use_gold=True).loss

    return ad.gradient_report(loss, model.store, samples=samples, seed=seed)
