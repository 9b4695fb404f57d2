# app_pages.py

import streamlit as st

from src import data_loader, plotting, report
from src.corpus import FORMATS, chunk_length_histogram
from src.evaluation import chunk_f1, segment_f1


# ==============================================================================
# PAGE 1: CORPUS STATISTICS
# ==============================================================================
def show_corpus_stats_page():
    """
    Chunk-length statistics of an uploaded CoNLL corpus.
    """
    st.title("📚 Corpus Statistics")
    st.markdown("Upload a training or test corpus to see how long its chunks are.")
    st.markdown("---")

    corpus_format = st.selectbox("Corpus format", sorted(FORMATS), key="stats_format")
    corpus_file = st.file_uploader("Select corpus file", type=['txt', 'conll', 'iob'], key="corpus_uploader")
    if corpus_file is None:
        st.info("No corpus uploaded yet.")
        return

    with st.spinner("Parsing corpus..."):
        sentences, error = data_loader.load_corpus(corpus_file, corpus_format)
    if error:
        st.error(error)
        return

    histogram = chunk_length_histogram(sentences)
    col1, col2, col3 = st.columns(3)
    col1.metric("Sentences", f"{len(sentences):,}")
    col2.metric("Tokens", f"{sum(len(s) for s in sentences):,}")
    col3.metric("Chunks", f"{int(histogram['count'].sum()):,}")

    st.subheader("Chunk lengths")
    st.text(report.format_histogram({corpus_file.name: histogram}))
    st.plotly_chart(plotting.plot_length_histogram(histogram), use_container_width=True)


# ==============================================================================
# PAGE 2: TRAINING LOG
# ==============================================================================
def show_training_log_page():
    """
    Loss and validation curves from an epochs.tsv file.
    """
    st.title("📈 Training Log")
    st.markdown("Upload the `epochs.tsv` written next to the checkpoints of a training run.")
    st.markdown("---")

    log_file = st.file_uploader("Select epochs.tsv", type=['tsv', 'txt'], key="log_uploader")
    if log_file is None:
        st.info("No training log uploaded yet.")
        return

    epoch_df, error = data_loader.load_epoch_log(log_file)
    if error:
        st.error(error)
        return
    if epoch_df.empty:
        st.warning("⚠️ The training log has no complete epochs.")
        return

    best = epoch_df.loc[epoch_df['valid_f1'].idxmax()]
    col1, col2, col3 = st.columns(3)
    col1.metric("Epochs", len(epoch_df))
    col2.metric("Best valid F1", f"{best['valid_f1']:.2f}", f"epoch {int(best['epoch'])}")
    col3.metric("Final train loss", f"{epoch_df['train_loss'].iloc[-1]:.4f}")

    st.plotly_chart(plotting.plot_training_curves(epoch_df), use_container_width=True)
    with st.expander("Click to view the full epoch table"):
        st.dataframe(epoch_df, use_container_width=True)


# ==============================================================================
# PAGE 3: EVALUATE PREDICTIONS
# ==============================================================================
def show_evaluation_page():
    """
    Scores an uploaded ``token gold pred`` file the way conlleval does.
    """
    st.title("🎯 Evaluate Predictions")
    st.markdown("Upload a `token gold pred` file, e.g. the `--dump` output of `chunkforge.py eval`.")
    st.markdown("---")

    pred_file = st.file_uploader("Select prediction file", type=['txt', 'conll'], key="pred_uploader")
    if pred_file is None:
        st.info("No prediction file uploaded yet.")
        return

    tags, error = data_loader.load_predictions(pred_file)
    if error:
        st.error(error)
        return
    gold, pred = tags
    chunk_report = chunk_f1(gold, pred)
    segment_report = segment_f1(gold, pred)

    col1, col2, col3, col4 = st.columns(4)
    col1.metric("F1", f"{chunk_report.f1:.2f}")
    col2.metric("Segment-F1", f"{segment_report.f1:.2f}")
    col3.metric("Precision", f"{chunk_report.precision:.2f}")
    col4.metric("Recall", f"{chunk_report.recall:.2f}")

    tabs = st.tabs(["📋 **Report**", "📊 **By Chunk Length**"])
    with tabs[0]:
        st.text(report.format_eval_report(chunk_report))
    with tabs[1]:
        st.plotly_chart(plotting.plot_length_f1(chunk_report, segment_report), use_container_width=True)
        st.text(report.format_length_table({"F1": chunk_report.length_f1(),
                                            "Segment-F1": segment_report.length_f1()}))

    pdf = report.generate_pdf_report(f"Evaluation of {pred_file.name}", chunk_report, segment_report)
    st.download_button("📄 Download PDF report", data=pdf.getvalue(), file_name="evaluation_report.pdf",
                       mime="application/pdf")
