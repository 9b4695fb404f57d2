# streamlit_app.py

import streamlit as st

import app_pages

st.set_page_config(
    page_title="chunkforge - Results Browser",
    page_icon="🧩",
    layout="wide"
)

PAGES = {
    "📚 Corpus Statistics": app_pages.show_corpus_stats_page,
    "📈 Training Log": app_pages.show_training_log_page,
    "🎯 Evaluate Predictions": app_pages.show_evaluation_page,
}

with st.sidebar:
    st.title("chunkforge")
    st.write("---")
    selection = st.radio("Navigation", list(PAGES.keys()), key="page_selection")
    st.write("---")
    st.caption("Local results browser. Nothing uploaded here is stored.")

PAGES[selection]()
