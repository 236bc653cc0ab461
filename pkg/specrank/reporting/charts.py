"""
Static SVG charts

Charts are rendered from the same frames that are written as CSV. Image
export goes through plotly's static export; when it is unavailable the chart
is skipped with a warning and the CSV stays the artifact of record.
"""

import logging
from pathlib import Path
from typing import List, Mapping, Optional, Tuple, Union

import pandas as pd
import plotly.graph_objects as go

from specrank.embeddings.manifest import write_atomic

logger = logging.getLogger(__name__)

WIDTH = 800
HEIGHT = 500


def rank_cdf_figure(cdf_frame: pd.DataFrame) -> go.Figure:
    """Step CDF of target rank per condition; expects columns condition, rank, cumulative_share"""
    fig = go.Figure()
    for condition, group in cdf_frame.groupby('condition', sort=True):
        fig.add_trace(go.Scatter(
            x=group['rank'], y=group['cumulative_share'], mode='lines', line_shape='hv', name=condition,
        ))
    fig.update_layout(
        title='Cumulative distribution of target ranks',
        xaxis_title='Target rank', yaxis_title='Share of descriptions',
        xaxis_type='log', yaxis_range=[0, 1],
        width=WIDTH, height=HEIGHT, template='simple_white',
    )
    return fig


def mean_rank_by_length_figure(binned: pd.DataFrame) -> go.Figure:
    """Mean rank per length bin with bootstrap intervals; expects binned_frame columns"""
    fig = go.Figure()
    for condition, group in binned.groupby('condition', sort=True):
        fig.add_trace(go.Scatter(
            x=group['bin_center'], y=group['mean_rank'], mode='lines+markers', name=condition,
            error_y=dict(
                type='data', symmetric=False,
                array=group['ci_high'] - group['mean_rank'],
                arrayminus=group['mean_rank'] - group['ci_low'],
            ),
        ))
    fig.update_layout(
        title='Mean rank by description length',
        xaxis_title='Description length (characters)', yaxis_title='Mean target rank',
        width=WIDTH, height=HEIGHT, template='simple_white',
    )
    return fig


def preference_figure(proportions: pd.DataFrame) -> go.Figure:
    """Share of choices per condition within each pair and study"""
    frame = proportions.copy()
    frame['pair'] = frame['study'] + ': ' + frame['condition_1'] + ' vs ' + frame['condition_2']
    fig = go.Figure()
    for condition, group in frame.groupby('condition', sort=True):
        fig.add_trace(go.Bar(
            x=group['pair'], y=group['share'], name=condition,
            error_y=dict(
                type='data', symmetric=False,
                array=group['ci_high'] - group['share'],
                arrayminus=group['share'] - group['ci_low'],
            ),
        ))
    fig.update_layout(
        title='Pairwise choices', barmode='group',
        yaxis_title='Share of trials', yaxis_range=[0, 1],
        width=WIDTH, height=HEIGHT, template='simple_white',
    )
    return fig


def cdf_frame(cdfs: Mapping[str, List[Tuple[float, float]]]) -> pd.DataFrame:
    rows = [
        {'condition': condition, 'rank': rank, 'cumulative_share': share}
        for condition, points in cdfs.items()
        for rank, share in points
    ]
    return pd.DataFrame(rows, columns=['condition', 'rank', 'cumulative_share'])


def write_svg(
    fig: go.Figure,
    path: Union[str, Path],
    provenance: Optional[Mapping[str, object]] = None,
) -> Optional[Path]:
    """
    Export fig as SVG with provenance in a leading comment

    Returns:
        The written path, or None when static export failed
    """
    try:
        svg = fig.to_image(format='svg', width=WIDTH, height=HEIGHT)
    except Exception as e:
        logger.warning("Could not export %s (%s); CSV output is unaffected", Path(path).name, e)
        return None
    if provenance:
        fields = ' '.join(f'{key}={provenance[key]}' for key in sorted(provenance))
        svg = f'<!-- {fields} -->\n'.encode('utf-8') + svg
    write_atomic(path, svg)
    return Path(path)
