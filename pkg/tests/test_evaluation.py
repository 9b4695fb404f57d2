import numpy as np
import pytest

from src.corpus import labeled_chunks, length_bucket
from src.evaluation import (
    NOT_AVAILABLE,
    chunk_f1,
    conlleval_parity,
    parse_conlleval,
    parse_reference_summary,
    per_length_f1,
    segment_f1,
    summary_values,
    write_conlleval,
)
from src.errors import AlignmentError, ParseError, VerificationError
from tests.conftest import FIXTURES, random_tags

CONLLEVAL = FIXTURES / "conlleval"
# hand-checked cases plus random ones scored by conlleval
REFERENCE_CASES = sorted(CONLLEVAL.glob("*.txt")) + sorted((CONLLEVAL / "random").glob("*.txt"))
RAW_ALPHABET = ["O", "B-NP", "I-NP", "B-VP", "I-VP", "B-PP", "I-PP"]


# --- Streaming chunk counter written after the conlleval perl script ---

def _split(tag):
    if "-" in tag:
        prefix, _, kind = tag.partition("-")
        return prefix, kind
    return tag, ""


def _end_of_chunk(prev_tag, tag, prev_type, kind):
    if prev_tag in ("B", "I") and tag in ("B", "O"):
        return True
    return prev_tag != "O" and prev_type != kind


def _start_of_chunk(prev_tag, tag, prev_type, kind):
    if tag == "B":
        return True
    if prev_tag == "O" and tag == "I":
        return True
    return tag != "O" and prev_type != kind


def streaming_counts(gold, pred):
    """(gold chunks, found chunks, correct chunks) the way conlleval counts them."""
    stream = []
    for g, p in zip(gold, pred):
        stream.extend(zip(g, p))
        stream.append(("O", "O"))
    in_correct = False
    last_c, last_ct, last_g, last_gt = "O", "", "O", ""
    found_c = found_g = correct = 0
    for c_tag, g_tag in stream:
        c, ct = _split(c_tag)
        g, gt = _split(g_tag)
        end_c = _end_of_chunk(last_c, c, last_ct, ct)
        end_g = _end_of_chunk(last_g, g, last_gt, gt)
        if in_correct:
            if end_c and end_g and last_gt == last_ct:
                in_correct = False
                correct += 1
            elif end_c != end_g or gt != ct:
                in_correct = False
        start_c = _start_of_chunk(last_c, c, last_ct, ct)
        start_g = _start_of_chunk(last_g, g, last_gt, gt)
        if start_c and start_g and gt == ct:
            in_correct = True
        found_c += start_c
        found_g += start_g
        last_c, last_ct, last_g, last_gt = c, ct, g, gt
    if in_correct:
        correct += 1
    return found_c, found_g, correct


def _random_corpus(rng, sentences=5, repaired=True):
    gold, pred = [], []
    for _ in range(sentences):
        length = int(rng.integers(1, 10))
        if repaired:
            gold.append(random_tags(rng, length))
            pred.append(random_tags(rng, length))
        else:
            gold.append([str(t) for t in rng.choice(RAW_ALPHABET, size=length)])
            pred.append([str(t) for t in rng.choice(RAW_ALPHABET, size=length)])
    return gold, pred


class TestChunkF1:

    def test_perfect_prediction(self):
        tags = [["B-NP", "I-NP", "B-VP", "O"]]
        report = chunk_f1(tags, tags)
        assert (report.precision, report.recall, report.f1) == (100.0, 100.0, 100.0)

    def test_boundary_error(self):
        gold = [["B-NP", "I-NP", "B-VP", "O"]]
        pred = [["B-NP", "I-NP", "B-VP", "I-VP"]]
        report = chunk_f1(gold, pred)
        assert report.precision == pytest.approx(50.0)
        assert report.recall == pytest.approx(50.0)
        assert report.f1 == pytest.approx(50.0)

    def test_no_predicted_chunks(self):
        report = chunk_f1([["B-NP", "O"]], [["O", "O"]])
        assert report.precision == 0.0 and report.f1 == 0.0

    def test_per_label_counts(self):
        report = chunk_f1([["B-NP", "B-VP", "B-NP"]], [["B-NP", "B-NP", "B-NP"]])
        assert list(report.per_label) == ["NP", "VP"]
        assert (report.per_label["NP"].gold, report.per_label["NP"].predicted, report.per_label["NP"].correct) == (2, 3, 2)
        assert report.per_label["VP"].predicted == 0

    def test_sentence_count_mismatch(self):
        with pytest.raises(AlignmentError):
            chunk_f1([["O"]], [])

    def test_sentence_length_mismatch_names_sentence(self):
        with pytest.raises(AlignmentError) as err:
            chunk_f1([["O"], ["O", "O"]], [["O"], ["O"]])
        assert err.value.sentence_id == 1

    def test_parallel_scoring_matches_serial(self, rng):
        gold, pred = _random_corpus(rng, sentences=40)
        assert chunk_f1(gold, pred, workers=4).as_dict() == chunk_f1(gold, pred).as_dict()

    def test_matches_streaming_counter(self, rng):
        for case in range(100):
            gold, pred = _random_corpus(rng, repaired=case % 2 == 0)
            report = chunk_f1(gold, pred)
            counts = (report.overall.gold, report.overall.predicted, report.overall.correct)
            assert counts == streaming_counts(gold, pred), (gold, pred)

    def test_symmetry(self, rng):
        for _ in range(50):
            gold, pred = _random_corpus(rng)
            assert chunk_f1(gold, pred).f1 == pytest.approx(chunk_f1(pred, gold).f1)

    def test_fixing_a_label_raises_f1(self):
        gold = [["B-NP", "I-NP", "B-VP", "B-PP", "B-NP"]]
        wrong = [["B-NP", "I-NP", "B-NP", "B-PP", "B-NP"]]
        assert chunk_f1(gold, wrong).f1 < chunk_f1(gold, gold).f1 == 100.0


class TestSegmentF1:

    def test_stripped_spans_disagree(self):
        report = segment_f1([["B-NP", "I-NP", "B-VP"]], [["B-NP", "B-VP", "I-VP"]])
        assert report.f1 == 0.0
        assert report.per_label == {}

    def test_label_confusions_keep_segmentation(self):
        gold = [["B-NP", "I-NP", "B-VP"]]
        pred = [["B-VP", "I-VP", "B-NP"]]
        assert segment_f1(gold, pred).f1 == 100.0
        assert chunk_f1(gold, pred).f1 < 100.0

    def test_dominates_chunk_f1(self, rng):
        for case in range(100):
            gold, pred = _random_corpus(rng, repaired=case % 2 == 0)
            assert segment_f1(gold, pred).f1 >= chunk_f1(gold, pred).f1 - 1e-9

    def test_stripping_is_a_projection(self, rng):
        gold, pred = _random_corpus(rng)
        once = segment_f1(gold, pred)
        stripped = [[t.split("-")[0] for t in s] for s in gold], [[t.split("-")[0] for t in s] for s in pred]
        assert segment_f1(*stripped).as_dict() == once.as_dict()


class TestPerLength:

    def test_empty_buckets(self):
        buckets = per_length_f1([["B-NP", "O", "B-VP"]], [["B-NP", "O", "B-NP"]])
        assert buckets["1"] == pytest.approx(50.0)
        assert buckets["2"] == NOT_AVAILABLE
        assert buckets[">=3"] == NOT_AVAILABLE

    def test_gold_length_for_recall_predicted_length_for_precision(self):
        gold = [["B-NP", "I-NP", "I-NP", "B-VP"]]
        pred = [["B-NP", "I-NP", "B-NP", "B-VP"]]
        report = chunk_f1(gold, pred)
        one, two, three = (report.per_length[b] for b in ("1", "2", ">=3"))
        assert (one.gold, one.predicted, one.correct) == (1, 2, 1)
        assert (two.gold, two.predicted, two.correct) == (0, 1, 0)
        assert (three.gold, three.predicted, three.correct) == (1, 0, 0)

    def test_brute_force_bucket_counts(self, rng):
        for _ in range(30):
            gold, pred = _random_corpus(rng, sentences=6)
            report = chunk_f1(gold, pred)
            for bucket, score in report.per_length.items():
                g = sum(1 for s in gold for c in labeled_chunks(s) if length_bucket(c.length) == bucket)
                p = sum(1 for s in pred for c in labeled_chunks(s) if length_bucket(c.length) == bucket)
                assert (score.gold, score.predicted) == (g, p)

    def test_aggregate_lies_between_bucket_scores(self, rng):
        checked = 0
        for _ in range(200):
            gold, pred = _random_corpus(rng, sentences=8)
            report = chunk_f1(gold, pred)
            values = list(report.length_f1().values())
            if NOT_AVAILABLE in values:
                continue
            assert min(values) - 1e-9 <= report.f1 <= max(values) + 1e-9
            checked += 1
        assert checked > 50

    def test_segment_buckets(self):
        buckets = per_length_f1([["B-NP", "I-NP"]], [["B-VP", "I-VP"]], segment=True)
        assert buckets["2"] == 100.0


class TestConllevalFiles:

    def test_parse_layout(self):
        text = "-DOCSTART- -X- O O\n\nHe PRP B-NP B-NP\nran VBD B-VP O\n\n\nOk UH O O\n"
        gold, pred = parse_conlleval(text)
        assert gold == [["B-NP", "B-VP"], ["O"]]
        assert pred == [["B-NP", "O"], ["O"]]

    def test_too_few_columns(self):
        with pytest.raises(ParseError, match="f.txt:2:"):
            parse_conlleval("a O O\nb O\n", "f.txt")

    def test_write_then_score(self, tmp_path):
        path = tmp_path / "dump.txt"
        write_conlleval(path, [["a", "b"]], [["B-NP", "I-NP"]], [["B-NP", "I-NP"]])
        assert path.read_text() == "a B-NP B-NP\nb I-NP I-NP\n\n"
        gold, pred = parse_conlleval(path.read_text())
        assert chunk_f1(gold, pred).f1 == 100.0

    @pytest.mark.parametrize("case", REFERENCE_CASES, ids=lambda p: p.stem)
    def test_reference_parity(self, case):
        reference = case.with_suffix(".ref")
        report = conlleval_parity(case, reference)
        expected = parse_reference_summary(reference.read_text())
        assert summary_values(report) == expected

    def test_every_tag_file_has_a_reference(self):
        assert len(REFERENCE_CASES) == 103
        assert all(case.with_suffix(".ref").is_file() for case in REFERENCE_CASES)

    def test_sentence_scored_against_itself(self):
        report = conlleval_parity(CONLLEVAL / "much_worse.txt", CONLLEVAL / "much_worse.ref")
        assert report.overall.gold == 3
        assert report.f1 == 100.0

    def test_all_outside_corpus_has_no_chunks(self):
        report = conlleval_parity(CONLLEVAL / "all_outside.txt", CONLLEVAL / "all_outside.ref")
        assert report.overall.gold == 0 and report.overall.predicted == 0

    def test_mismatch_lists_fields(self, tmp_path):
        wrong = tmp_path / "wrong.ref"
        wrong.write_text((CONLLEVAL / "mixed.ref").read_text().replace("46.15", "47.00"))
        with pytest.raises(VerificationError, match="f1: reference=47.00 ours=46.15"):
            conlleval_parity(CONLLEVAL / "mixed.txt", wrong)

    def test_summary_without_totals(self):
        with pytest.raises(ParseError):
            parse_reference_summary("nothing here\n")

    def test_random_cases_agree_with_streaming_counter_on_disk(self, rng, tmp_path):
        for k in range(20):
            gold, pred = _random_corpus(rng, repaired=False)
            path = tmp_path / f"case{k}.txt"
            write_conlleval(path, [[f"w{i}" for i in range(len(s))] for s in gold], gold, pred)
            g, p = parse_conlleval(path.read_text())
            report = chunk_f1(g, p)
            assert (report.overall.gold, report.overall.predicted, report.overall.correct) == streaming_counts(gold, pred)


def test_as_dict_reports_na_buckets():
    row = chunk_f1([["B-NP"]], [["B-NP"]]).as_dict()
    assert row["f1"] == 100.0
    assert row["f1_len_2"] == NOT_AVAILABLE
    assert np.isclose(row["f1_len_1"], 100.0)
