# src/report.py

import io

import pandas as pd
from reportlab.lib import colors
from reportlab.lib.pagesizes import letter
from reportlab.lib.styles import getSampleStyleSheet
from reportlab.lib.units import inch
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from src.corpus import LENGTH_BUCKETS
from src.evaluation import NOT_AVAILABLE


def _pct(value):
    return NOT_AVAILABLE if value == NOT_AVAILABLE else f"{value:.2f}"


# --- Text reports ---

def format_eval_report(report):
    """
    The conlleval summary (counts line, overall line, one line per label)
    followed by a ``key: value`` block for scripts.
    """
    lines = [
        f"processed {report.tokens} tokens with {report.overall.gold} phrases; "
        f"found: {report.overall.predicted} phrases; correct: {report.overall.correct}.",
        f"accuracy: {report.token_accuracy:6.2f}%; precision: {report.precision:6.2f}%; "
        f"recall: {report.recall:6.2f}%; FB1: {report.f1:6.2f}",
    ]
    for label, score in report.per_label.items():
        lines.append(
            f"{label:>17}: precision: {score.precision:6.2f}%; recall: {score.recall:6.2f}%; "
            f"FB1: {score.f1:6.2f}  {score.predicted}"
        )
    lines.append("")
    for key, value in report.as_dict().items():
        lines.append(f"{key}: {value:.2f}" if isinstance(value, float) else f"{key}: {value}")
    return "\n".join(lines) + "\n"


def length_frame(rows):
    """``{model name: {bucket: f1 or "n/a"}}`` into a table with one column per bucket."""
    frame = pd.DataFrame.from_dict(rows, orient="index", columns=list(LENGTH_BUCKETS))
    frame.index.name = "model"
    return frame


def format_length_table(rows):
    frame = length_frame(rows).apply(lambda col: col.map(_pct))
    return frame.to_string()


def comparison_frame(results):
    """``[(model name, chunk report, segment report)]`` into an F1 / Segment-F1 table."""
    return pd.DataFrame(
        [{"model": name, "F1": chunk.f1, "Segment-F1": segment.f1} for name, chunk, segment in results]
    ).set_index("model")


def format_comparison_table(results):
    return comparison_frame(results).to_string(float_format=lambda v: f"{v:.2f}")


def format_histogram(histograms):
    """Chunk-length statistics, one column per corpus, cells like ``10275 (77.7%)``."""
    columns = {}
    for name, frame in histograms.items():
        columns[name] = [f"{int(row['count'])} ({row['percent']:.1f}%)" for _, row in frame.iterrows()]
    table = pd.DataFrame(columns, index=pd.Index(list(LENGTH_BUCKETS), name="length"))
    return table.to_string()


def format_grid_table(table):
    return table.to_string(index=False, float_format=lambda v: f"{v:.6g}")


def format_gradcheck(report):
    """One line per parameter block: max relative error, or ``skipped`` when frozen."""
    width = max((len(name) for name in report), default=0)
    lines = []
    for name, error in report.items():
        lines.append(f"{name:<{width}}  {'skipped' if error is None else f'{error:.3e}'}")
    return "\n".join(lines)


# --- PDF export ---

def _table(data, col_widths=None):
    table = Table(data, colWidths=col_widths)
    table.setStyle(TableStyle([
        ('BACKGROUND', (0, 0), (-1, 0), colors.lightgrey),
        ('GRID', (0, 0), (-1, -1), 1, colors.black),
        ('FONTNAME', (0, 0), (-1, 0), 'Helvetica-Bold'),
        ('ALIGN', (1, 0), (-1, -1), 'RIGHT'),
        ('VALIGN', (0, 0), (-1, -1), 'MIDDLE'),
    ]))
    return table


def generate_pdf_report(title, chunk_report, segment_report):
    """
    Evaluation summary as a PDF (returned as a BytesIO): overall and
    segmentation scores, the per-label breakdown and per-length F1.
    """
    output = io.BytesIO()
    doc = SimpleDocTemplate(output, pagesize=letter,
                            rightMargin=72, leftMargin=72,
                            topMargin=72, bottomMargin=18)
    styles = getSampleStyleSheet()
    story = [
        Paragraph(title, styles['h1']),
        Paragraph(f"Report generated: {pd.Timestamp.now().strftime('%Y-%m-%d %H:%M')}", styles['Normal']),
        Spacer(1, 0.2 * inch),
    ]

    story.append(Paragraph("Overall", styles['h2']))
    header = ["", "Precision", "Recall", "F1", "Gold", "Found", "Correct"]
    rows = [header]
    for name, report in (("Chunks", chunk_report), ("Segments", segment_report)):
        rows.append([name, f"{report.precision:.2f}", f"{report.recall:.2f}", f"{report.f1:.2f}",
                     report.overall.gold, report.overall.predicted, report.overall.correct])
    story.append(_table(rows))
    story.append(Spacer(1, 0.2 * inch))

    if chunk_report.per_label:
        story.append(Paragraph("Per label", styles['h2']))
        rows = [["Label", "Precision", "Recall", "F1", "Found"]]
        for label, score in chunk_report.per_label.items():
            rows.append([label, f"{score.precision:.2f}", f"{score.recall:.2f}", f"{score.f1:.2f}", score.predicted])
        story.append(_table(rows))
        story.append(Spacer(1, 0.2 * inch))

    story.append(Paragraph("F1 by chunk length", styles['h2']))
    rows = [[""] + list(LENGTH_BUCKETS)]
    for name, report in (("F1", chunk_report), ("Segment-F1", segment_report)):
        values = report.length_f1()
        rows.append([name] + [_pct(values[b]) for b in LENGTH_BUCKETS])
    story.append(_table(rows, col_widths=[1.5 * inch] + [1.0 * inch] * len(LENGTH_BUCKETS)))

    doc.build(story)
    output.seek(0)
    return output
