"""
Rank and length regressions over rank results

Conditions are treatment coded against an explicit reference level; every
non-reference condition c gets an indicator column named 'condition[c]'.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from specrank.errors import EmptyInput, SingularDesign, ValidationError
from specrank.ranking.records import RankResult
from specrank.ranking.summary import results_frame
from specrank.stats.regression import RegressionFit, delta_r2, fit_table, ols_fit

logger = logging.getLogger(__name__)

INTERCEPT = 'intercept'
LENGTH = 'char_length'


def condition_column(condition: str) -> str:
    return f'condition[{condition}]'


def condition_design(
    frame: pd.DataFrame,
    reference: str,
    covariates: Sequence[str] = (),
    condition_col: str = 'condition',
) -> Tuple[np.ndarray, Tuple[str, ...]]:
    """
    Treatment-coded design matrix

    Args:
        frame: One row per observation with a condition column
        reference: Level absorbed into the intercept; must occur in frame
        covariates: Numeric frame columns appended after the condition indicators

    Returns:
        (design, coefficient_names), intercept first

    Raises:
        ValidationError: reference level absent or a covariate column missing
    """
    levels = sorted(frame[condition_col].unique())
    if reference not in levels:
        raise ValidationError(f"Reference condition {reference!r} not among {levels}")
    missing = [c for c in covariates if c not in frame.columns]
    if missing:
        raise ValidationError(f"Unknown covariate columns: {missing}")

    columns = [np.ones(len(frame))]
    names = [INTERCEPT]
    conditions = frame[condition_col].to_numpy()
    for level in levels:
        if level == reference:
            continue
        columns.append((conditions == level).astype(np.float64))
        names.append(condition_column(level))
    for covariate in covariates:
        columns.append(frame[covariate].to_numpy(dtype=np.float64))
        names.append(covariate)
    return np.column_stack(columns), tuple(names)


def _frame(results: Iterable[RankResult]) -> pd.DataFrame:
    frame = results_frame(results)
    if frame.empty:
        raise EmptyInput("No rank results to analyze")
    return frame


@dataclass(frozen=True)
class ConditionModel:
    """rank ~ condition (+ length), with the length-only model it is compared against"""
    reference: str
    full: RegressionFit
    length_only: Optional[RegressionFit] = None
    delta_r2: Optional[float] = None


def fit_condition_model(
    results: Iterable[RankResult],
    reference: str,
    control_length: bool = True,
) -> ConditionModel:
    """
    Regress target rank on condition, optionally controlling for length

    With control_length the condition term's contribution is reported as the
    R^2 it adds beyond a length-only model fitted on the same ranks.
    """
    return _fit_condition_frame(_frame(results), reference, control_length)


def _fit_condition_frame(frame: pd.DataFrame, reference: str, control_length: bool) -> ConditionModel:
    y = frame['target_rank'].to_numpy(dtype=np.float64)
    covariates = (LENGTH,) if control_length else ()
    design, names = condition_design(frame, reference, covariates)
    full = ols_fit(design, y, names)
    if not control_length:
        return ConditionModel(reference, full)

    reduced_design = np.column_stack([np.ones(len(frame)), frame[LENGTH].to_numpy(dtype=np.float64)])
    length_only = ols_fit(reduced_design, y, (INTERCEPT, LENGTH))
    return ConditionModel(reference, full, length_only, delta_r2(length_only, full))


def pairwise_condition_effects(results: Iterable[RankResult], control_length: bool = True) -> pd.DataFrame:
    """
    One two-condition model per pair of conditions

    The alphabetically first condition of each pair is the reference, so beta
    is the rank difference of the second relative to the first.
    """
    frame = _frame(results)
    rows = []
    for reference, other in itertools.combinations(sorted(frame['condition'].unique()), 2):
        subset = frame[frame['condition'].isin((reference, other))].reset_index(drop=True)
        try:
            model = _fit_condition_frame(subset, reference, control_length)
        except (SingularDesign, ValidationError) as e:
            logger.warning(f"Skipping condition pair {reference} vs {other}: {e}")
            continue
        beta, se, z, p = model.full.coefficient(condition_column(other))
        rows.append({
            'reference': reference,
            'condition': other,
            'beta': beta,
            'se': se,
            'z': z,
            'p': p,
            'r_squared': model.full.r_squared,
            'delta_r2': model.delta_r2,
            'n_obs': model.full.n_obs,
        })
    columns = ['reference', 'condition', 'beta', 'se', 'z', 'p', 'r_squared', 'delta_r2', 'n_obs']
    return pd.DataFrame(rows, columns=columns)


def fit_length_by_condition(results: Iterable[RankResult], reference: str) -> RegressionFit:
    """char_length ~ condition: how much longer each condition's descriptions are"""
    frame = _frame(results)
    design, names = condition_design(frame, reference)
    return ols_fit(design, frame[LENGTH].to_numpy(dtype=np.float64), names)


def fit_length_slopes(results: Iterable[RankResult]) -> pd.DataFrame:
    """
    Within-condition rank ~ length regressions

    Conditions whose lengths are constant or that have fewer than three
    descriptions are skipped with a warning.
    """
    frame = _frame(results)
    rows = []
    for condition, group in frame.groupby('condition', sort=True):
        lengths = group[LENGTH].to_numpy(dtype=np.float64)
        if len(group) < 3 or np.ptp(lengths) == 0:
            logger.warning(f"Skipping length slope for {condition}: not enough length variation")
            continue
        design = np.column_stack([np.ones(len(group)), lengths])
        fit = ols_fit(design, group['target_rank'].to_numpy(dtype=np.float64), (INTERCEPT, LENGTH))
        beta, se, z, p = fit.coefficient(LENGTH)
        rows.append({
            'condition': condition,
            'beta': beta,
            'se': se,
            'z': z,
            'p': p,
            'r_squared': fit.r_squared,
            'n_obs': fit.n_obs,
        })
    return pd.DataFrame(rows, columns=['condition', 'beta', 'se', 'z', 'p', 'r_squared', 'n_obs'])


def condition_model_table(model: ConditionModel) -> pd.DataFrame:
    """Coefficients of the full model, plus the length-only comparison when present"""
    frames: List[pd.DataFrame] = []
    full = fit_table(model.full)
    full.insert(0, 'model', 'condition_plus_length' if model.length_only is not None else 'condition')
    frames.append(full)
    if model.length_only is not None:
        reduced = fit_table(model.length_only)
        reduced.insert(0, 'model', 'length_only')
        frames.append(reduced)
    table = pd.concat(frames, ignore_index=True)
    table['reference'] = model.reference
    return table
