# src/plotting.py

import plotly.graph_objects as go

from src.corpus import LENGTH_BUCKETS
from src.evaluation import NOT_AVAILABLE


def plot_training_curves(epoch_df):
    """Train loss (left axis) against validation F1 and Segment-F1 (right axis)."""
    fig = go.Figure()
    fig.add_trace(go.Scatter(x=epoch_df['epoch'], y=epoch_df['train_loss'], mode='lines',
                             line=dict(color='grey'), name='Train loss'))
    fig.add_trace(go.Scatter(x=epoch_df['epoch'], y=epoch_df['valid_f1'], mode='lines+markers',
                             line=dict(color='royalblue'), name='Valid F1', yaxis='y2'))
    fig.add_trace(go.Scatter(x=epoch_df['epoch'], y=epoch_df['valid_segment_f1'], mode='lines',
                             line=dict(color='darkorange', dash='dash'), name='Valid Segment-F1', yaxis='y2'))

    best = epoch_df.loc[epoch_df['valid_f1'].idxmax()]
    fig.add_vline(x=best['epoch'], line_dash="dot", line_color="green",
                  annotation_text=f"best {best['valid_f1']:.2f}", annotation_position="top left")
    fig.update_layout(
        title_text="<b>Training Progress</b><br><sup>Loss and validation scores per epoch</sup>",
        xaxis_title='Epoch', yaxis_title='Mean loss',
        yaxis2=dict(title='F1 (%)', overlaying='y', side='right', range=[0, 100]),
        hovermode='x unified', legend=dict(yanchor="bottom", y=0.01, xanchor="right", x=0.99)
    )
    return fig


def plot_length_f1(chunk_report, segment_report):
    """F1 and Segment-F1 per chunk-length bucket; empty buckets are left out."""
    fig = go.Figure()
    for name, report, color in (("F1", chunk_report, 'royalblue'), ("Segment-F1", segment_report, 'darkorange')):
        values = report.length_f1()
        buckets = [b for b in LENGTH_BUCKETS if values[b] != NOT_AVAILABLE]
        fig.add_trace(go.Bar(x=buckets, y=[values[b] for b in buckets], name=name, marker_color=color,
                             text=[f"{values[b]:.2f}" for b in buckets], textposition='outside'))
    fig.update_layout(
        title_text="<b>Scores by Chunk Length</b>",
        xaxis_title='Chunk length', yaxis_title='F1 (%)', yaxis_range=[0, 105], barmode='group'
    )
    return fig


def plot_length_histogram(histogram_df):
    """Chunk counts per length bucket, labelled with their share."""
    fig = go.Figure(go.Bar(
        x=list(histogram_df.index), y=histogram_df['count'], marker_color='seagreen',
        text=[f"{p:.1f}%" for p in histogram_df['percent']], textposition='outside', name='Chunks'
    ))
    fig.update_layout(
        title_text="<b>Chunk Length Distribution</b>",
        xaxis_title='Chunk length', yaxis_title='Chunks'
    )
    return fig
