# src/config.py

"""
Run configuration: a ``key=value`` text file layered over a preset, plus
grid specifications and process-wide logging setup.
"""

import logging
import os
import re
from dataclasses import dataclass, fields
from pathlib import Path

from src.errors import ConfigError
from src.models import ModelConfig

logger = logging.getLogger(__name__)

LOG_ENV = "CHUNKFORGE_LOG"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
LOG_LEVELS = {"debug": logging.DEBUG, "info": logging.INFO, "warn": logging.WARNING}

PRESETS = {
    "chunking": {
        "d_word": 50, "use_char_cnn": True, "max_chunk_length": 10,
        "epochs": 200, "format": "chunking3col", "valid_fraction": 0.1,
    },
    "slot": {
        "d_word": 50, "use_char_cnn": False, "max_chunk_length": 5,
        "epochs": 100, "format": "slot2col", "valid_fraction": 0.2,
    },
}

TUNABLE_KEYS = (
    "lr0", "decay", "context_window", "d_word", "dropout",
    "max_chunk_length", "d_pointer", "d_length", "seed",
)

_MODEL_KEYS = tuple(f.name for f in fields(ModelConfig))


@dataclass
class RunConfig(ModelConfig):
    preset: str = ""
    train_file: str = ""
    valid_file: str = ""
    test_file: str = ""
    embedding_file: str = ""
    checkpoint_dir: str = "checkpoints"
    log_file: str = ""
    format: str = "chunking3col"
    valid_fraction: float = 0.1
    workers: int = 1
    dump_file: str = ""

    def model_config(self):
        """The ModelConfig part of this run (what a checkpoint records)."""
        return ModelConfig(**{k: getattr(self, k) for k in _MODEL_KEYS})

    def settings(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def validate_paths(self, need_train=True):
        """Check every input path exists; create the checkpoint directory."""
        required = [("train_file", self.train_file)] if need_train else []
        optional = [("valid_file", self.valid_file), ("test_file", self.test_file),
                    ("embedding_file", self.embedding_file)]
        if need_train and not self.train_file:
            raise ConfigError("no training file configured", key="train_file")
        for key, value in required + [(k, v) for k, v in optional if v]:
            if not Path(value).is_file():
                raise ConfigError(f"file not found: {value}", key=key)
        if self.checkpoint_dir:
            Path(self.checkpoint_dir).mkdir(parents=True, exist_ok=True)
        return self


def _coerce(name, kind, text, line):
    try:
        if kind is bool:
            lowered = text.lower()
            if lowered in ("true", "yes", "1", "on"):
                return True
            if lowered in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"cannot read '{text}' as {kind.__name__}", key=name, line=line) from None


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def parse_config(text, overrides=None):
    """
    Parse ``key=value`` lines into a validated RunConfig.

    A ``preset`` key (anywhere in the file) supplies defaults that the
    other keys override; ``overrides`` (CLI flags) win over both.
    """
    values, seen = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got '{line}'", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError("unknown key", key=key, line=lineno)
        if key in seen:
            raise ConfigError(f"duplicate key (first set on line {seen[key]})", key=key, line=lineno)
        seen[key] = lineno
        values[key] = _coerce(key, _FIELD_TYPES[key], value, lineno)

    preset = values.get("preset", "")
    if preset and preset not in PRESETS:
        raise ConfigError(f"unknown preset (expected one of {', '.join(PRESETS)})", key="preset", line=seen["preset"])
    merged = {**PRESETS.get(preset, {}), **values, **(overrides or {})}
    merged.setdefault("d_decoder", 2 * merged.get("d_hidden", ModelConfig.d_hidden))
    config = RunConfig(**merged)
    config.validate()
    if config.format not in ("chunking3col", "slot2col"):
        raise ConfigError("must be chunking3col or slot2col", key="format", line=seen.get("format"))
    if not 0 < config.valid_fraction < 1:
        raise ConfigError("must be in (0, 1)", key="valid_fraction", line=seen.get("valid_fraction"))
    if config.workers < 1:
        raise ConfigError("must be at least 1", key="workers", line=seen.get("workers"))
    return config


def load_config(path, overrides=None):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"), overrides)


def parse_grid_spec(spec):
    """
    ``"lr0=0.01,0.05 context_window=1,3"`` (or ``;`` separated) into
    ``{"lr0": [0.01, 0.05], "context_window": [1, 3]}``.
    """
    grid = {}
    for item in re.split(r"[\s;]+", spec.strip()):
        if not item:
            continue
        if "=" not in item:
            raise ConfigError(f"expected key=v1,v2,... in grid spec, got '{item}'")
        key, raw = item.split("=", 1)
        if key not in TUNABLE_KEYS:
            raise ConfigError(f"not tunable (tunable keys: {', '.join(TUNABLE_KEYS)})", key=key)
        if key in grid:
            raise ConfigError("listed twice in grid spec", key=key)
        values = [v for v in raw.split(",") if v]
        if not values:
            raise ConfigError("no values in grid spec", key=key)
        grid[key] = [_coerce(key, _FIELD_TYPES[key], v, None) for v in values]
    if not grid:
        raise ConfigError("empty grid spec")
    return grid


def setup_logging(log_file=None):
    """Root logger from CHUNKFORGE_LOG (debug, info, warn); optional log file."""
    name = os.environ.get(LOG_ENV, "info").strip().lower()
    if name not in LOG_LEVELS:
        raise ConfigError(f"{LOG_ENV} must be one of {', '.join(LOG_LEVELS)}, got '{name}'")
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    formatter = logging.Formatter(LOG_FORMAT)
    stream = logging.StreamHandler()
    stream.setFormatter(formatter)
    root.addHandler(stream)
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setFormatter(formatter)
        root.addHandler(file_handler)
    root.setLevel(LOG_LEVELS[name])
    return root
