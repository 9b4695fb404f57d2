import math

import numpy as np
import pandas as pd
import pytest

from src import training
from src.checkpoint import load_checkpoint, save_checkpoint
from src.errors import ConfigError, DivergenceError, DomainError
from src.evaluation import chunk_f1
from src.models import VARIANTS, ChunkerOutput, build_model
from src.training import EpochRecord, evaluate_model, grid_search, predict, train
from tests.conftest import make_sentence, small_config, synthetic_corpus


@pytest.fixture(scope="module")
def tiny_corpus():
    corpus = synthetic_corpus(12, seed=4)
    return corpus[:8], corpus[8:]


class TestTrain:

    def test_same_seed_same_run(self, tiny_corpus):
        train_set, valid_set = tiny_corpus
        config = small_config("model3", epochs=2, dropout=0.2)
        first = train(config, train_set, valid_set)
        second = train(config, train_set, valid_set)
        assert [r.train_loss for r in first.epochs] == [r.train_loss for r in second.epochs]
        a, b = first.model.store.snapshot(), second.model.store.snapshot()
        assert all(np.array_equal(a[k], b[k]) for k in a)

    def test_epoch_records(self, tiny_corpus):
        train_set, valid_set = tiny_corpus
        result = train(small_config("model1", epochs=3), train_set, valid_set)
        assert [r.epoch for r in result.epochs] == [1, 2, 3]
        assert all(math.isfinite(r.train_loss) for r in result.epochs)
        assert result.best_f1 == max(r.valid_f1 for r in result.epochs)
        assert result.epochs[result.best_epoch - 1].valid_f1 == result.best_f1
        assert "valid F1" in result.epochs[0].log_line()

    def test_logged_rate_is_the_last_one_applied(self, tiny_corpus):
        train_set, valid_set = tiny_corpus
        result = train(small_config("baseline", epochs=2, lr0=0.1, decay=0.5), train_set, valid_set)
        n = len(train_set)
        assert result.epochs[0].lr == pytest.approx(0.1 / (1 + 0.5 * (n - 1)))
        assert result.epochs[1].lr == pytest.approx(0.1 / (1 + 0.5 * (2 * n - 1)))
        assert result.model.store.step == 2 * n

    def test_checkpoints_and_log_are_written(self, tiny_corpus, tmp_path):
        train_set, valid_set = tiny_corpus
        result = train(small_config("model2", epochs=2), train_set, valid_set, checkpoint_dir=tmp_path)
        assert result.best_path == tmp_path / "best.ckpt"
        assert result.final_path == tmp_path / "final.ckpt"
        log = pd.read_csv(tmp_path / "epochs.tsv", sep="\t")
        assert list(log.columns) == list(EpochRecord.__dataclass_fields__)
        assert len(log) == 2

        best = load_checkpoint(result.best_path, expected_variant="model2")
        gold = [s.gold_tags for s in valid_set]
        assert chunk_f1(gold, predict(best, valid_set)).f1 == pytest.approx(result.best_f1)

    def test_returned_model_holds_best_parameters(self, tiny_corpus, tmp_path):
        train_set, valid_set = tiny_corpus
        result = train(small_config("model3", epochs=3), train_set, valid_set, checkpoint_dir=tmp_path)
        chunk_report, _, _ = evaluate_model(result.model, valid_set)
        assert chunk_report.f1 == pytest.approx(result.best_f1)

    def test_pretrained_vectors_are_copied(self, tiny_corpus):
        train_set, valid_set = tiny_corpus
        vectors = {".": np.full(6, 0.25)}
        config = small_config("model1", epochs=1, freeze_word_embeddings=True)
        result = train(config, train_set, valid_set, embeddings=vectors)
        row = result.model.vocab.word_index["."]
        np.testing.assert_array_equal(result.model.word_table.table.values[row], np.full(6, 0.25))

    def test_empty_sets(self, tiny_corpus):
        train_set, valid_set = tiny_corpus
        with pytest.raises(DomainError):
            train(small_config("model3"), [], valid_set)
        with pytest.raises(DomainError):
            train(small_config("model3"), train_set, [])

    def test_divergence_names_epoch_and_sentence(self, tiny_corpus, monkeypatch):
        train_set, valid_set = tiny_corpus

        def exploding(model, sentence, mode="eval", rng=None, use_gold=True):
            nan = training.ad.Tensor(float("nan"))
            return ChunkerOutput(nan, nan, nan, [])

        monkeypatch.setattr(training, "forward", exploding)
        with pytest.raises(DivergenceError) as err:
            train(small_config("model3"), train_set, valid_set)
        assert err.value.epoch == 1
        assert err.value.sentence_id in {s.id for s in train_set}


    def test_exploding_learning_rate_raises_divergence(self, toy_sentences):
        with pytest.raises(DivergenceError) as err:
            train(small_config("baseline", lr0=1e300, epochs=3), toy_sentences[:5], toy_sentences[:5])
        assert err.value.epoch == 1
        assert err.value.sentence_id in {s.id for s in toy_sentences[:5]}
        assert "diverged" in str(err.value)

    @pytest.mark.parametrize("variant", ["model1", "model3"])
    def test_exploding_learning_rate_on_decoder_models(self, variant, tiny_corpus):
        train_set, valid_set = tiny_corpus
        with pytest.raises(DivergenceError):
            train(small_config(variant, lr0=1e300, epochs=3), train_set, valid_set)


class TestPredict:


    def test_order_is_kept_across_workers(self, toy_vocab, toy_sentences):
        model = build_model(small_config("model3", init_scale=1.0), toy_vocab)
        serial = predict(model, toy_sentences, workers=1)
        assert predict(model, toy_sentences, workers=3) == serial
        assert predict(model, toy_sentences, workers=1) == serial

    def test_from_checkpoint_path(self, toy_vocab, toy_sentences, tmp_path):
        model = build_model(small_config("baseline"), toy_vocab)
        path = save_checkpoint(model, tmp_path / "b.ckpt")
        assert predict(str(path), toy_sentences[:3]) == predict(model, toy_sentences[:3])

    def test_oov_warning(self, toy_vocab, caplog):
        model = build_model(small_config("model1"), toy_vocab)
        evaluate_model(model, [make_sentence(["B-NP", "I-NP"], ["zzz", "qqq"])])
        assert "out of vocabulary" in caplog.text


class TestGridSearch:

    def test_one_row_per_point_best_first(self, tiny_corpus):
        train_set, valid_set = tiny_corpus
        grid = {"lr0": [0.05, 0.1], "dropout": [0.0, 0.3]}
        table = grid_search(small_config("model1", epochs=1), grid, train_set, valid_set)
        assert len(table) == 4
        assert set(zip(table["lr0"], table["dropout"])) == {(0.05, 0.0), (0.05, 0.3), (0.1, 0.0), (0.1, 0.3)}
        assert table["valid_f1"].is_monotonic_decreasing


class TestGradientCheckGuard:

    def test_too_many_parameters(self):
        with pytest.raises(ConfigError):
            training.gradient_check("model3", dims={"d_hidden": 200, "d_word": 200})


@pytest.mark.slow
@pytest.mark.parametrize("variant", VARIANTS)
def test_every_variant_overfits_the_toy_corpus(variant, toy_sentences):
    config = small_config(
        variant, d_word=16, d_hidden=16, d_decoder=32, d_pointer=16, d_length=4,
        context_window=1, init_scale=0.2, epochs=60, seed=1,
    )
    result = train(config, toy_sentences, toy_sentences)
    best = result.epochs[result.best_epoch - 1]
    assert result.best_f1 >= 99.0
    assert best.valid_segment_f1 >= 99.0


@pytest.mark.slow
def test_pointer_model_beats_the_tagger_on_synthetic_data():
    corpus = synthetic_corpus(300, seed=11)
    train_set, valid_set = corpus[:240], corpus[240:]
    grid = {"lr0": [0.02, 0.05, 0.1]}
    best = {}
    for variant in ("baseline", "model3"):
        config = small_config(
            variant, d_word=16, d_hidden=16, d_decoder=32, d_pointer=16, d_length=4,
            context_window=1, epochs=15, seed=2,
        )
        table = grid_search(config, grid, train_set, valid_set)
        assert len(table) == 3
        best[variant] = table["valid_f1"].iloc[0]
    assert best["model3"] >= best["baseline"]
