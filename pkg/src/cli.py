# src/cli.py

"""
Command-line surface: ``train``, ``grid``, ``eval``, ``predict``,
``gradcheck`` and ``stats``. Every command returns a process exit code
(0 ok, 1 verification failure, 2 usage/config error, 3 data error).
"""

import argparse
import logging
import sys
from pathlib import Path

from src import report
from src.checkpoint import load_checkpoint
from src.config import load_config, parse_grid_spec, setup_logging
from src.corpus import FORMATS, build_vocab, chunk_length_histogram, read_conll, serialize_conll, split_train_valid
from src.errors import EXIT_OK, EXIT_USAGE, ChunkforgeError, ConfigError, VerificationError
from src.evaluation import chunk_f1, conlleval_parity, segment_f1, write_conlleval
from src.layers import load_embedding_file
from src.models import VARIANTS
from src.training import (
    GRADCHECK_TOLERANCE,
    echo_config,
    evaluate_model,
    gradient_check,
    grid_search,
    predict,
    train,
)

logger = logging.getLogger(__name__)


def _overrides(args):
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "format", None):
        overrides["format"] = args.format
    return overrides


def _load_run(args, need_train=True):
    config = load_config(args.config, _overrides(args))
    if config.log_file:
        setup_logging(config.log_file)
    config.validate_paths(need_train=need_train)
    echo_config(config.settings())
    return config


def _embeddings(config):
    if not config.embedding_file:
        return None
    vectors, dim = load_embedding_file(config.embedding_file)
    if dim != config.d_word:
        raise ConfigError(f"embedding file has width {dim}, d_word is {config.d_word}", key="embedding_file")
    return vectors


def _train_valid(config):
    sentences = read_conll(config.train_file, config.format)
    if config.valid_file:
        return sentences, read_conll(config.valid_file, config.format)
    train_set, valid_set = split_train_valid(sentences, config.valid_fraction, config.seed)
    logger.info("held out %d of %d training sentences for validation", len(valid_set), len(sentences))
    return train_set, valid_set


# --- Commands ---

def cmd_train(args):
    config = _load_run(args)
    train_set, valid_set = _train_valid(config)
    result = train(
        config.model_config(), train_set, valid_set,
        checkpoint_dir=config.checkpoint_dir, embeddings=_embeddings(config), workers=config.workers,
    )
    print(f"best valid F1 {result.best_f1:.2f} at epoch {result.best_epoch}: {result.best_path}")
    return EXIT_OK


def cmd_grid(args):
    config = _load_run(args)
    grid = parse_grid_spec(args.grid)
    train_set, valid_set = _train_valid(config)
    table = grid_search(config.model_config(), grid, train_set, valid_set,
                        embeddings=_embeddings(config), workers=config.workers)
    print(report.format_grid_table(table))
    best = table.iloc[0]
    print("best: " + " ".join(f"{key}={best[key]}" for key in grid) + f"  valid F1 {best['valid_f1']:.2f}")
    return EXIT_OK


def cmd_eval(args):
    """
    Score one or more checkpoints on a test file. With one model the full
    report is printed; with several a comparison table plus per-length
    tables.
    """
    expected_vocab = None
    workers = args.workers
    fmt = args.format or "chunking3col"
    test_file = args.test
    if args.config:
        config = _load_run(args, need_train=False)
        fmt = config.format
        test_file = test_file or config.test_file
        workers = max(workers, config.workers)
        if config.train_file:
            expected_vocab = build_vocab(read_conll(config.train_file, fmt))
    if not test_file:
        raise ConfigError("no test file given (use --test or test_file=)", key="test_file")
    sentences = read_conll(test_file, fmt)
    gold = [s.gold_tags for s in sentences]

    results = []
    if args.oracle:
        results.append(("oracle", chunk_f1(gold, gold), segment_f1(gold, gold), gold))
    for path in args.checkpoints:
        model = load_checkpoint(path, expected_vocab=expected_vocab)
        chunk_report, segment_report, predicted = evaluate_model(model, sentences, workers)
        name = model.variant
        if any(r[0] == name for r in results):
            name = f"{model.variant} ({path})"
        results.append((name, chunk_report, segment_report, predicted))
    if not results:
        raise ConfigError("nothing to evaluate: give checkpoints or --oracle")

    if len(results) == 1:
        name, chunk_report, segment_report, predicted = results[0]
        print(report.format_eval_report(chunk_report))
        print(f"segment F1: {segment_report.f1:.2f}")
    else:
        print(report.format_comparison_table([r[:3] for r in results]))
    print("\nSegment-F1 by chunk length")
    print(report.format_length_table({name: seg.length_f1() for name, _, seg, _ in results}))
    print("\nF1 by chunk length")
    print(report.format_length_table({name: chunk.length_f1() for name, chunk, _, _ in results}))

    name, chunk_report, segment_report, predicted = results[-1]
    if args.reference and not args.dump:
        raise ConfigError("--reference compares against the --dump file; give both", key="reference")
    if args.dump:
        write_conlleval(args.dump, [s.tokens for s in sentences], gold, predicted)
        logger.info("wrote %s predictions to %s", name, args.dump)
    if args.reference:
        conlleval_parity(args.dump, args.reference)
        print(f"conlleval parity ok against {args.reference}")
    if args.pdf:
        pdf = report.generate_pdf_report(f"chunkforge evaluation: {name}", chunk_report, segment_report)
        Path(args.pdf).write_bytes(pdf.getvalue())
    return EXIT_OK


def cmd_predict(args):
    model = load_checkpoint(args.checkpoint)
    sentences = read_conll(args.input, args.format or "chunking3col")
    predictions = predict(model, sentences, args.workers)
    text = serialize_conll(sentences, predictions)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _parse_dims(text):
    dims = {}
    for item in (text or "").split(","):
        if not item.strip():
            continue
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"expected key=value in --dims, got '{item}'")
        try:
            dims[key.strip()] = int(value)
        except ValueError:
            raise ConfigError(f"'{value}' is not an integer", key=key.strip()) from None
    return dims


def cmd_gradcheck(args):
    """Worst relative error per block over ``--seeds`` random toy problems; 1 if any block fails."""
    dims = _parse_dims(args.dims)
    worst = {}
    for seed in range(args.seed or 0, (args.seed or 0) + args.seeds):
        block_errors = gradient_check(args.variant, dims, seed, args.samples, args.freeze_words)
        for name, error in block_errors.items():
            if error is None:
                worst[name] = None
            else:
                worst[name] = max(worst.get(name) or 0.0, error)
    print(report.format_gradcheck(worst))
    failing = [name for name, error in worst.items() if error is not None and error >= GRADCHECK_TOLERANCE]
    if failing:
        raise VerificationError(f"gradient check failed for {', '.join(failing)}")
    return EXIT_OK


def cmd_stats(args):
    names = [Path(path).name for path in args.files]
    histograms = {}
    for path, name in zip(args.files, names):
        key = name if names.count(name) == 1 else str(path)
        if key in histograms:
            raise ConfigError(f"{path} is listed twice", key="files")
        histograms[key] = chunk_length_histogram(read_conll(path, args.format or "chunking3col"))
    print(report.format_histogram(histograms))
    return EXIT_OK


# --- Argument parsing ---

def build_parser():
    parser = argparse.ArgumentParser(prog="chunkforge", description="Neural sequence chunking.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required):
        p.add_argument("--config", required=config_required, help="key=value run configuration")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--format", choices=sorted(FORMATS), help="corpus column layout")

    p = sub.add_parser("train", help="train one model")
    common(p, True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid", help="grid search over tunable keys")
    common(p, True)
    p.add_argument("--grid", required=True, help="e.g. 'lr0=0.01,0.05 context_window=1,3'")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("eval", help="score checkpoints on a test file")
    common(p, False)
    p.add_argument("checkpoints", nargs="*", help="checkpoint files")
    p.add_argument("--test", help="test corpus (overrides test_file=)")
    p.add_argument("--dump", help="write token/gold/pred lines here")
    p.add_argument("--reference", help="conlleval output for the --dump file; exit 1 if any number differs")
    p.add_argument("--pdf", help="write a PDF summary here")
    p.add_argument("--oracle", action="store_true", help="also score the gold tags against themselves")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="tag a corpus with a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--input", required=True)
    p.add_argument("--output")
    p.add_argument("--format", choices=sorted(FORMATS))
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check on a toy model")
    p.add_argument("--variant", choices=VARIANTS, required=True)
    p.add_argument("--dims", help="e.g. 'd_word=4,d_hidden=3'")
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--seeds", type=int, default=1, help="number of seeds")
    p.add_argument("--samples", type=int, default=None, help="coordinates per block (default: all)")
    p.add_argument("--freeze-words", action="store_true", help="freeze the word embedding table")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("stats", help="chunk-length histogram per corpus")
    p.add_argument("files", nargs="+")
    p.add_argument("--format", choices=sorted(FORMATS))
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        setup_logging()
        return args.func(args)
    except ChunkforgeError as e:
        logger.error("%s", e)
        return e.exit_code
    except OSError as e:
        logger.error("%s", e)
        return EXIT_USAGE
