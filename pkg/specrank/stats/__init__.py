"""
Statistics over rank results and preference trials
"""

from .analyses import (
    ConditionModel, condition_design, condition_model_table, fit_condition_model,
    fit_length_by_condition, fit_length_slopes, pairwise_condition_effects
)
from .binning import LengthBin, binned_frame, length_binned_means
from .bootstrap import BootstrapCI, bootstrap_ci
from .correlation import pearson_r
from .preference import (
    ChoiceAgreement, PreferenceModel, PreferenceTrial, choice_agreement, choice_agreement_table,
    fit_choice_model, fit_preference_model, fit_specificity_rate_model, preference_proportions,
    read_trials
)
from .regression import RegressionFit, delta_r2, fit_table, fit_tables, logistic_fit, ols_fit

__all__ = [
    'BootstrapCI', 'ChoiceAgreement', 'ConditionModel', 'LengthBin', 'PreferenceModel',
    'PreferenceTrial', 'RegressionFit', 'binned_frame', 'bootstrap_ci', 'choice_agreement',
    'choice_agreement_table', 'condition_design', 'condition_model_table', 'delta_r2',
    'fit_choice_model', 'fit_condition_model', 'fit_length_by_condition', 'fit_length_slopes',
    'fit_preference_model', 'fit_specificity_rate_model', 'fit_table', 'fit_tables',
    'length_binned_means', 'logistic_fit', 'ols_fit', 'pairwise_condition_effects', 'pearson_r',
    'preference_proportions', 'read_trials',
]
