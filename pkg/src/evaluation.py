# src/evaluation.py

"""
Chunk-level scoring with conlleval semantics.

A chunk is a maximal ``B-X (I-X)*`` run after repairing stray ``I`` tags,
O tokens are never chunks, and a predicted chunk is correct only when its
begin, length and label all match a gold chunk. Percentages are kept at
full precision here; rounding happens when reports are printed.
"""

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict

from src.corpus import LENGTH_BUCKETS, labeled_chunks, length_bucket, repair_iob, strip_labels
from src.errors import AlignmentError, ParseError, VerificationError

logger = logging.getLogger(__name__)

NOT_AVAILABLE = "n/a"


@dataclass
class Score:
    gold: int = 0
    predicted: int = 0
    correct: int = 0

    @property
    def precision(self):
        return 100.0 * self.correct / self.predicted if self.predicted else 0.0

    @property
    def recall(self):
        return 100.0 * self.correct / self.gold if self.gold else 0.0

    @property
    def f1(self):
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    @property
    def empty(self):
        return self.gold == 0 and self.predicted == 0

    def add(self, other):
        self.gold += other.gold
        self.predicted += other.predicted
        self.correct += other.correct


@dataclass
class EvalReport:
    overall: Score
    per_label: Dict[str, Score] = field(default_factory=dict)
    per_length: Dict[str, Score] = field(default_factory=dict)
    tokens: int = 0
    correct_tags: int = 0

    @property
    def precision(self):
        return self.overall.precision

    @property
    def recall(self):
        return self.overall.recall

    @property
    def f1(self):
        return self.overall.f1

    @property
    def token_accuracy(self):
        return 100.0 * self.correct_tags / self.tokens if self.tokens else 0.0

    def length_f1(self):
        """F1 per length bucket, ``"n/a"`` for buckets with neither gold nor predicted chunks."""
        return {b: (NOT_AVAILABLE if s.empty else s.f1) for b, s in self.per_length.items()}

    def as_dict(self):
        row = {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "gold_chunks": self.overall.gold,
            "predicted_chunks": self.overall.predicted,
            "correct_chunks": self.overall.correct,
        }
        for bucket, value in self.length_f1().items():
            row[f"f1_len_{bucket}"] = value
        return row


# --- Scoring ---

def _sentence_counts(pair):
    gold_tags, pred_tags = pair
    gold = set(labeled_chunks(gold_tags))
    pred = set(labeled_chunks(pred_tags))
    hits = gold & pred

    per_label = {}
    per_length = {b: Score() for b in LENGTH_BUCKETS}
    for span in gold:
        per_label.setdefault(span.label, Score()).gold += 1
        per_length[length_bucket(span.length)].gold += 1
    for span in pred:
        per_label.setdefault(span.label, Score()).predicted += 1
        per_length[length_bucket(span.length)].predicted += 1
    for span in hits:
        per_label[span.label].correct += 1
        per_length[length_bucket(span.length)].correct += 1

    overall = Score(len(gold), len(pred), len(hits))
    matching = sum(1 for g, p in zip(gold_tags, pred_tags) if g == p)
    return overall, per_label, per_length, len(gold_tags), matching


def _check_aligned(gold, pred):
    if len(gold) != len(pred):
        raise AlignmentError(
            f"gold has {len(gold)} sentences, prediction has {len(pred)}",
            min(len(gold), len(pred)),
        )
    for k, (g, p) in enumerate(zip(gold, pred)):
        if len(g) != len(p):
            raise AlignmentError(f"gold has {len(g)} tags, prediction has {len(p)}", k)


def chunk_f1(gold, pred, workers=1):
    """
    Score per-sentence tag sequences.

    ``gold`` and ``pred`` are lists of tag lists, one per sentence.
    Sentences are scored independently (optionally on a thread pool) and
    the counts reduced in sentence order.
    """
    _check_aligned(gold, pred)
    pairs = list(zip(gold, pred))
    if workers > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sentence_counts, pairs))
    else:
        results = [_sentence_counts(p) for p in pairs]

    report = EvalReport(Score(), {}, {b: Score() for b in LENGTH_BUCKETS})
    for overall, per_label, per_length, tokens, matching in results:
        report.overall.add(overall)
        for label, score in per_label.items():
            report.per_label.setdefault(label, Score()).add(score)
        for bucket, score in per_length.items():
            report.per_length[bucket].add(score)
        report.tokens += tokens
        report.correct_tags += matching
    report.per_label = dict(sorted(report.per_label.items()))
    return report


def segment_f1(gold, pred, workers=1):
    """Chunk F1 after mapping B-X to B and I-X to I on both (repaired) sides."""
    _check_aligned(gold, pred)
    report = chunk_f1(
        [strip_labels(repair_iob(g)) for g in gold], [strip_labels(repair_iob(p)) for p in pred], workers
    )
    report.per_label = {}
    return report


def per_length_f1(gold, pred, segment=False):
    """
    F1 per chunk-length bucket {1, 2, >=3}.

    A gold chunk counts towards the recall of its own length's bucket and a
    predicted chunk towards the precision of its own length's bucket.
    """
    scorer = segment_f1 if segment else chunk_f1
    return scorer(gold, pred).length_f1()


# --- conlleval files ---

def parse_conlleval(text, source="<conlleval>"):
    """
    Read the ``token ... gold pred`` layout: the last two columns are gold
    and predicted tags, blank lines and -DOCSTART- lines separate sentences.
    Returns ``(gold, pred)`` as lists of per-sentence tag lists.
    """
    gold, pred = [], []
    g, p = [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields or fields[0] == "-DOCSTART-":
            if g:
                gold.append(g)
                pred.append(p)
                g, p = [], []
            continue
        if len(fields) < 3:
            raise ParseError(f"expected 'token gold pred', found {len(fields)} columns", source, lineno)
        g.append(fields[-2])
        p.append(fields[-1])
    if g:
        gold.append(g)
        pred.append(p)
    return gold, pred


def read_conlleval(path):
    path = Path(path)
    return parse_conlleval(path.read_text(encoding="utf-8"), str(path))


def write_conlleval(path, tokens, gold, pred):
    """Dump ``token gold pred`` lines, one blank line after each sentence."""
    _check_aligned(gold, pred)
    lines = []
    for toks, g, p in zip(tokens, gold, pred):
        lines.extend(f"{t} {gt} {pt}" for t, gt, pt in zip(toks, g, p))
        lines.append("")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


_SUMMARY = re.compile(
    r"processed (\d+) tokens with (\d+) phrases; found: (\d+) phrases; correct: (\d+)\."
)
_OVERALL = re.compile(r"accuracy:\s*([\d.]+)%; precision:\s*([\d.]+)%; recall:\s*([\d.]+)%; FB1:\s*([\d.]+)")
_LABEL = re.compile(r"^\s*(\S+): precision:\s*([\d.]+)%; recall:\s*([\d.]+)%; FB1:\s*([\d.]+)\s+(\d+)")


def parse_reference_summary(text):
    """Numbers from a conlleval summary, as printed strings keyed by field name."""
    values = {}
    for line in text.splitlines():
        m = _SUMMARY.search(line)
        if m:
            values.update(zip(("tokens", "gold", "found", "correct"), m.groups()))
            continue
        m = _OVERALL.search(line)
        if m:
            values.update(zip(("accuracy", "precision", "recall", "f1"), m.groups()))
            continue
        m = _LABEL.match(line)
        if m:
            label = m.group(1)
            for key, value in zip(("precision", "recall", "f1", "found"), m.groups()[1:]):
                values[f"{label}.{key}"] = value
    if "f1" not in values:
        raise ParseError("no conlleval summary line found", "<reference>")
    return values


def summary_values(report):
    """The same fields as ``parse_reference_summary``, formatted the way conlleval prints them."""
    values = {
        "tokens": str(report.tokens),
        "gold": str(report.overall.gold),
        "found": str(report.overall.predicted),
        "correct": str(report.overall.correct),
        "accuracy": f"{report.token_accuracy:.2f}",
        "precision": f"{report.precision:.2f}",
        "recall": f"{report.recall:.2f}",
        "f1": f"{report.f1:.2f}",
    }
    for label, score in report.per_label.items():
        values[f"{label}.precision"] = f"{score.precision:.2f}"
        values[f"{label}.recall"] = f"{score.recall:.2f}"
        values[f"{label}.f1"] = f"{score.f1:.2f}"
        values[f"{label}.found"] = str(score.predicted)
    return values


def conlleval_parity(tag_file, reference_file):
    """
    Score ``tag_file`` and compare against the reference script's output for
    it. Returns our report when every printed number agrees; otherwise raises
    VerificationError listing each differing field.
    """
    gold, pred = read_conlleval(tag_file)
    report = chunk_f1(gold, pred)
    expected = parse_reference_summary(Path(reference_file).read_text(encoding="utf-8"))
    ours = summary_values(report)
    diffs = []
    for key in sorted(set(expected) | set(ours)):
        if expected.get(key) != ours.get(key):
            diffs.append(f"  {key}: reference={expected.get(key)} ours={ours.get(key)}")
    if diffs:
        raise VerificationError(f"{tag_file}: conlleval parity failed\n" + "\n".join(diffs))
    logger.debug("conlleval parity ok for %s (F1 %s)", tag_file, ours["f1"])
    return report

