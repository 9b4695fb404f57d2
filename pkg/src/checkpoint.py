# src/checkpoint.py

"""
Versioned, line-oriented text checkpoints.

A checkpoint holds the model config, the four vocabularies with their
sha256 digests and every named parameter printed at 17 significant
digits, which is enough for float64 values to read back bit-exactly.
"""

import logging
from dataclasses import fields
from pathlib import Path

import numpy as np

from src.corpus import Vocab
from src.errors import CheckpointError
from src.models import ModelConfig, build_model

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MAGIC = "chunkforge-checkpoint"
VOCAB_KINDS = ("words", "chars", "labels", "tags")

_CONFIG_TYPES = {f.name: f.type for f in fields(ModelConfig)}


def _format_values(values):
    return " ".join(f"{v:.17g}" for v in values.reshape(-1))


def _config_value(name, text):
    kind = _CONFIG_TYPES.get(name)
    if kind is None:
        raise CheckpointError(f"unknown config key '{name}' in checkpoint")
    try:
        if kind in (bool, "bool"):
            if text not in ("true", "false"):
                raise ValueError(text)
            return text == "true"
        if kind in (int, "int"):
            return int(text)
        if kind in (float, "float"):
            return float(text)
        return text
    except ValueError:
        raise CheckpointError(f"bad value '{text}' for config key '{name}'") from None


def _config_text(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dumps(model):
    """Serialise ``model`` to checkpoint text."""
    lines = [f"{MAGIC} {FORMAT_VERSION}", f"variant {model.variant}"]
    for name, value in model.config.as_dict().items():
        lines.append(f"config {name} {_config_text(value)}")
    for kind, digest in model.vocab.hashes().items():
        lines.append(f"hash {kind} {digest}")
    for kind in VOCAB_KINDS:
        entries = getattr(model.vocab, kind)
        lines.append(f"vocab {kind} {len(entries)}")
        lines.extend(entries)
    for name, param in model.store.items():
        dims = ",".join(str(d) for d in param.shape)
        lines.append(f"param {name} {int(param.requires_grad)} {dims}")
        lines.append(_format_values(param.values))
    lines.append("end")
    return "\n".join(lines) + "\n"


def save_checkpoint(model, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(model), encoding="utf-8")
    logger.debug("wrote checkpoint %s (%d parameter blocks)", path, len(model.store))
    return path


class _Lines:
    """Cursor over checkpoint lines that reports the line number on errors."""

    def __init__(self, text, source):
        self.lines = text.split("\n")
        self.pos = 0
        self.source = source

    def fail(self, message):
        raise CheckpointError(f"{self.source}:{self.pos}: {message}")

    def next(self):
        if self.pos >= len(self.lines):
            self.fail("unexpected end of checkpoint")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def peek(self):
        return self.lines[self.pos] if self.pos < len(self.lines) else None


def loads(text, source="<checkpoint>", expected_variant=None):
    """Rebuild a model from checkpoint text; vocab digests are re-checked."""
    cur = _Lines(text, source)
    header = cur.next().split()
    if len(header) != 2 or header[0] != MAGIC:
        cur.fail("not a chunkforge checkpoint")
    if header[1] != str(FORMAT_VERSION):
        cur.fail(f"unsupported checkpoint version {header[1]} (this build reads {FORMAT_VERSION})")

    parts = cur.next().split()
    if len(parts) != 2 or parts[0] != "variant":
        cur.fail("expected 'variant <name>'")
    variant = parts[1]
    if expected_variant is not None and variant != expected_variant:
        raise CheckpointError(f"checkpoint holds variant '{variant}', expected '{expected_variant}'")

    settings = {}
    while (cur.peek() or "").startswith("config "):
        _, name, value = cur.next().split(" ", 2)
        settings[name] = _config_value(name, value)
    config = ModelConfig(**settings)
    if config.variant != variant:
        cur.fail(f"variant line '{variant}' disagrees with config variant '{config.variant}'")

    digests = {}
    while (cur.peek() or "").startswith("hash "):
        _, kind, digest = cur.next().split()
        digests[kind] = digest

    entries = {}
    for kind in VOCAB_KINDS:
        parts = cur.next().split()
        if len(parts) != 3 or parts[:2] != ["vocab", kind]:
            cur.fail(f"expected 'vocab {kind} <n>'")
        entries[kind] = [cur.next() for _ in range(int(parts[2]))]
    vocab = Vocab(**entries)
    for kind, digest in vocab.hashes().items():
        if digests.get(kind) != digest:
            raise CheckpointError(f"{source}: {kind} vocabulary hash mismatch")

    model = build_model(config, vocab)
    seen = set()
    while cur.peek() != "end":
        parts = cur.next().split()
        if len(parts) != 4 or parts[0] != "param":
            cur.fail("expected 'param <name> <0|1> <dims>' or 'end'")
        _, name, trainable, dims = parts
        if name not in model.store:
            cur.fail(f"parameter '{name}' does not belong to a {variant} model")
        shape = tuple(int(d) for d in dims.split(",")) if dims else ()
        param = model.store[name]
        if shape != param.shape:
            cur.fail(f"parameter '{name}' has shape {shape}, model expects {param.shape}")
        try:
            values = np.array([float(v) for v in cur.next().split()], dtype=np.float64)
        except ValueError:
            cur.fail(f"non-numeric value in parameter '{name}'")
        if values.size != param.size:
            cur.fail(f"parameter '{name}' has {values.size} values, expected {param.size}")
        param.values[...] = values.reshape(shape)
        param.requires_grad = trainable == "1"
        seen.add(name)
    missing = set(model.store.names()) - seen
    if missing:
        raise CheckpointError(f"{source}: missing parameters {', '.join(sorted(missing))}")
    return model


def load_checkpoint(path, expected_variant=None, expected_vocab=None):
    """
    Read a checkpoint file.

    With ``expected_vocab`` the checkpoint's vocabulary digests must match it
    (a model trained on other data cannot score this corpus's indices).
    """
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    model = loads(path.read_text(encoding="utf-8"), str(path), expected_variant)
    if expected_vocab is not None and expected_vocab.hashes() != model.vocab.hashes():
        raise CheckpointError(f"{path}: vocabulary does not match the expected vocabulary")
    logger.info("loaded %s checkpoint %s", model.variant, path)
    return model
