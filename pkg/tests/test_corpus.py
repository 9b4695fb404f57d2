import numpy as np
import pytest

from src.corpus import (
    ChunkSpan,
    build_vocab,
    chunk_length_histogram,
    chunks_to_iob,
    iob_to_chunks,
    labeled_chunks,
    parse_conll,
    repair_iob,
    serialize_conll,
    split_long_spans,
    split_train_valid,
    strip_labels,
)
from src.errors import DomainError, ParseError, StateError, TilingError
from tests.conftest import make_sentence, random_tags

THREE_COL = """\
-DOCSTART- -X- O

Confidence NN B-NP
in IN B-PP
the DT B-NP
pound NN I-NP

is VBZ B-VP
widely RB I-VP
"""


class TestParsing:

    def test_three_columns(self):
        sentences = parse_conll(THREE_COL, "chunking3col")
        assert [s.tokens for s in sentences] == [["Confidence", "in", "the", "pound"], ["is", "widely"]]
        assert sentences[0].gold_tags == ["B-NP", "B-PP", "B-NP", "I-NP"]
        assert sentences[0].extra[0] == ("NN",)
        assert [s.id for s in sentences] == [0, 1]

    def test_two_columns(self):
        sentences = parse_conll("from O\nboston B-fromloc.city_name\n", "slot2col")
        assert sentences[0].gold_tags == ["O", "B-fromloc.city_name"]

    def test_empty_input(self):
        assert parse_conll("", "slot2col") == []
        assert parse_conll("\n\n\n", "chunking3col") == []

    def test_ragged_line_reports_line_number(self):
        with pytest.raises(ParseError, match="train.txt:2:"):
            parse_conll("a DT B-NP\nb B-NP\n", "chunking3col", source="train.txt")

    def test_malformed_tag(self):
        with pytest.raises(ParseError, match="malformed tag"):
            parse_conll("a DT X-NP\n", "chunking3col")

    def test_unknown_format(self):
        with pytest.raises(ParseError):
            parse_conll("a O\n", "fourcol")

    def test_serialise_appends_predictions(self):
        sentences = parse_conll(THREE_COL, "chunking3col")
        text = serialize_conll(sentences[1:], [["B-VP", "B-ADVP"]])
        assert text == "is VBZ B-VP B-VP\nwidely RB I-VP B-ADVP\n"


class TestIobCodec:

    @pytest.mark.parametrize("tags, expected", [
        (["O", "I-NP"], ["O", "B-NP"]),
        (["I-NP", "I-NP"], ["B-NP", "I-NP"]),
        (["B-NP", "I-VP"], ["B-NP", "B-VP"]),
        (["B-NP", "I-NP", "O"], ["B-NP", "I-NP", "O"]),
        (["O", "I", "I"], ["O", "B", "I"]),
    ])
    def test_repair(self, tags, expected):
        assert repair_iob(tags) == expected

    def test_repair_is_idempotent_and_removes_o_then_i(self, rng):
        alphabet = ["O", "B-NP", "I-NP", "B-VP", "I-VP"]
        for _ in range(500):
            tags = list(rng.choice(alphabet, size=int(rng.integers(1, 12))))
            once = repair_iob(tags)
            assert repair_iob(once) == once
            assert once[0] in ("O", "B-NP", "B-VP")
            for prev, cur in zip(once, once[1:]):
                assert not (prev == "O" and cur.startswith("I-"))

    def test_chunks_tile_with_o_singletons(self):
        spans = iob_to_chunks(["B-NP", "I-NP", "O", "O", "B-VP"])
        assert spans == [
            ChunkSpan(0, 2, "NP"), ChunkSpan(2, 1, "O"), ChunkSpan(3, 1, "O"), ChunkSpan(4, 1, "VP"),
        ]

    def test_chunk_extraction_needs_repaired_tags(self):
        with pytest.raises(StateError):
            iob_to_chunks(["O", "I-NP"])

    def test_chunks_to_iob(self):
        tags = chunks_to_iob([ChunkSpan(1, 2, "VP"), ChunkSpan(0, 1, "NP"), ChunkSpan(3, 1, "O")], 4)
        assert tags == ["B-NP", "B-VP", "I-VP", "O"]

    def test_gap_reports_first_uncovered_token(self):
        with pytest.raises(TilingError) as err:
            chunks_to_iob([ChunkSpan(0, 1, "NP"), ChunkSpan(2, 1, "VP")], 3)
        assert err.value.index == 1

    def test_overlap(self):
        with pytest.raises(TilingError) as err:
            chunks_to_iob([ChunkSpan(0, 2, "NP"), ChunkSpan(1, 2, "VP")], 3)
        assert err.value.index == 1

    def test_span_past_sentence_end(self):
        with pytest.raises(TilingError):
            chunks_to_iob([ChunkSpan(0, 3, "NP")], 2)

    def test_round_trip_on_random_sequences(self, rng):
        for _ in range(10_000):
            tags = random_tags(rng, int(rng.integers(1, 15)))
            assert chunks_to_iob(iob_to_chunks(tags), len(tags)) == tags

    def test_labeled_chunks_drop_o(self):
        assert labeled_chunks(["O", "I-NP", "O"]) == [ChunkSpan(1, 1, "NP")]

    def test_strip_labels(self):
        assert strip_labels(["B-NP", "I-NP", "O", "B-VP"]) == ["B", "I", "O", "B"]

    def test_split_long_spans(self):
        pieces = split_long_spans([ChunkSpan(0, 5, "NP"), ChunkSpan(5, 1, "O")], 2)
        assert pieces == [ChunkSpan(0, 2, "NP"), ChunkSpan(2, 2, "NP"), ChunkSpan(4, 1, "NP"), ChunkSpan(5, 1, "O")]


class TestSplit:

    def test_holdout_arithmetic(self):
        train, valid = split_train_valid(list(range(8936)), fraction=0.1, seed=0)
        assert (len(train), len(valid)) == (8043, 893)
        train, valid = split_train_valid(list(range(10)), fraction=0.1, seed=0)
        assert (len(train), len(valid)) == (9, 1)

    def test_deterministic_and_order_preserving(self):
        data = list(range(50))
        first = split_train_valid(data, 0.2, seed=7)
        assert first == split_train_valid(data, 0.2, seed=7)
        train, valid = first
        assert train == sorted(train) and valid == sorted(valid)
        assert sorted(train + valid) == data
        assert len(valid) == 10

    def test_empty_corpus(self):
        with pytest.raises(DomainError):
            split_train_valid([], 0.1, 0)

    @pytest.mark.parametrize("fraction", [0.0, 1.0, 1.5])
    def test_fraction_out_of_range(self, fraction):
        with pytest.raises(DomainError):
            split_train_valid([1, 2, 3], fraction, 0)


class TestStatistics:

    def test_histogram_counts_labeled_chunks(self):
        sentences = [
            make_sentence(["B-NP", "I-NP", "B-VP", "O"]),
            make_sentence(["B-NP", "I-NP", "I-NP", "I-NP", "O", "B-PP"]),
        ]
        hist = chunk_length_histogram(sentences)
        assert list(hist.index) == ["1", "2", ">=3"]
        assert hist["count"].tolist() == [2, 1, 1]
        np.testing.assert_allclose(hist["percent"].tolist(), [50.0, 25.0, 25.0])

    def test_empty_corpus_gives_zero_table(self):
        hist = chunk_length_histogram([])
        assert hist["count"].tolist() == [0, 0, 0]
        assert hist["percent"].tolist() == [0.0, 0.0, 0.0]


class TestVocab:

    def test_build_vocab(self):
        sentences = [
            make_sentence(["B-NP", "I-NP", "B-VP"], ["The", "Cat", "sat"]),
            make_sentence(["B-NP", "O"], ["cat", "2024"]),
        ]
        vocab = build_vocab(sentences)
        assert vocab.words[:2] == ["<pad>", "<unk>"]
        assert "cat" in vocab.words and "0000" in vocab.words
        assert vocab.labels == ["O", "NP", "VP"]
        assert vocab.chunk_labels == ["NP", "VP"]
        assert vocab.tags == ["O", "B-NP", "I-NP", "B-VP", "I-VP"]
        assert vocab.word_id("CAT") == vocab.word_id("cat")
        assert vocab.word_id("1999") == vocab.word_index["0000"]
        assert vocab.word_id("unseen") == 1

    def test_hashes_change_with_content(self):
        a = build_vocab([make_sentence(["B-NP"], ["dog"])])
        b = build_vocab([make_sentence(["B-NP"], ["cat"])])
        assert a.hashes()["words"] != b.hashes()["words"]
        assert a.hashes()["labels"] == b.hashes()["labels"]

    def test_empty_training_set(self):
        with pytest.raises(DomainError):
            build_vocab([])
