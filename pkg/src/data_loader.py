# src/data_loader.py

import io

import pandas as pd

from src.corpus import parse_conll
from src.errors import ChunkforgeError
from src.evaluation import parse_conlleval

# Columns written to epochs.tsv by training
EPOCH_LOG_COLUMNS = ['epoch', 'train_loss', 'valid_f1', 'valid_segment_f1', 'lr']


def _read_text(uploaded_file):
    raw = uploaded_file.getvalue()
    return raw.decode('utf-8') if isinstance(raw, bytes) else raw


def load_corpus(uploaded_file, corpus_format="chunking3col"):
    """
    Loads a CoNLL-style corpus upload. Returns (sentences, error).
    """
    if uploaded_file is None:
        return None, "No corpus file uploaded."

    try:
        sentences = parse_conll(_read_text(uploaded_file), corpus_format, source=uploaded_file.name)
    except UnicodeDecodeError:
        return None, "Corpus file is not UTF-8 text."
    except ChunkforgeError as e:
        return None, f"Failed to parse corpus file. Error: {e}"

    if not sentences:
        return None, "Corpus file contains no sentences."
    return sentences, None


def load_epoch_log(uploaded_file):
    """
    Loads an epochs.tsv training log. Returns (DataFrame, error).
    """
    if uploaded_file is None:
        return None, "No training log uploaded."

    try:
        df = pd.read_csv(io.StringIO(_read_text(uploaded_file)), sep='\t')
    except UnicodeDecodeError:
        return None, "Training log is not UTF-8 text."
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        return None, f"Failed to read training log. Error: {e}"

    missing_cols = [col for col in EPOCH_LOG_COLUMNS if col not in df.columns]
    if missing_cols:
        return None, f"Training log is missing required columns: {', '.join(missing_cols)}."

    for col in EPOCH_LOG_COLUMNS:
        df[col] = pd.to_numeric(df[col], errors='coerce')
    df.dropna(subset=EPOCH_LOG_COLUMNS, inplace=True)
    return df[EPOCH_LOG_COLUMNS], None


def load_predictions(uploaded_file):
    """
    Loads a ``token gold pred`` file. Returns ((gold, pred), error).
    """
    if uploaded_file is None:
        return None, "No prediction file uploaded."

    try:
        gold, pred = parse_conlleval(_read_text(uploaded_file), source=uploaded_file.name)
    except UnicodeDecodeError:
        return None, "Prediction file is not UTF-8 text."
    except ChunkforgeError as e:
        return None, f"Failed to parse prediction file. Error: {e}"

    if not gold:
        return None, "Prediction file contains no tokens."
    return (gold, pred), None
