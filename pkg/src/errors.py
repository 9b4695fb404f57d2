# src/errors.py

"""
Exception hierarchy shared by every chunkforge module.

Each exception carries the process exit code the CLI reports for it:
0 success, 1 verification failure, 2 usage/config error, 3 data error.
"""

EXIT_OK = 0
EXIT_VERIFICATION = 1
EXIT_USAGE = 2
EXIT_DATA = 3


class ChunkforgeError(Exception):
    """Base class for all chunkforge errors."""
    exit_code = EXIT_DATA


class DimensionError(ChunkforgeError):
    """Operand shapes do not agree."""


class DomainError(ChunkforgeError):
    """An input lies outside the domain an operation is defined on."""


class NonFiniteError(DomainError):
    """A value that must be finite is inf or NaN."""


class StateError(ChunkforgeError):
    """An object is in the wrong state for the requested operation."""


class GoldIndexError(ChunkforgeError, IndexError):
    """A gold class index is outside the distribution it indexes."""


class ParseError(ChunkforgeError):
    def __init__(self, message, source=None, line=None):
        self.source = source
        self.line = line
        where = ""
        if source is not None:
            where = f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class TilingError(ChunkforgeError):
    def __init__(self, message, index):
        self.index = index
        super().__init__(f"{message} (at token {index})")


class AlignmentError(ChunkforgeError):
    def __init__(self, message, sentence_id):
        self.sentence_id = sentence_id
        super().__init__(f"sentence {sentence_id}: {message}")


class DivergenceError(ChunkforgeError):
    def __init__(self, epoch, sentence_id, loss):
        self.epoch = epoch
        self.sentence_id = sentence_id
        self.loss = loss
        where = f"epoch {epoch}" if sentence_id is None else f"epoch {epoch}, sentence {sentence_id}"
        super().__init__(f"training diverged (loss {loss!r}) at {where}")


class CheckpointError(ChunkforgeError):
    exit_code = EXIT_USAGE


class ConfigError(ChunkforgeError):
    exit_code = EXIT_USAGE

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if key is not None:
            prefix += f"'{key}': "
        super().__init__(prefix + message)


class VerificationError(ChunkforgeError):
    exit_code = EXIT_VERIFICATION
