"""
Pairwise preference analyses

Trials come from two-alternative studies: participants see two descriptions of
the same image and pick one, either the one they prefer ("preference" study)
or the one that contains more information ("specificity" study).

Items are (image_id, condition pair) with the pair in alphabetical order;
per-item choice rates are the share of trials choosing the pair's second
condition.
"""

import logging
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Literal, Optional, Sequence, Tuple, Union

import msgspec
import numpy as np
import pandas as pd

from specrank.conditions import is_valid_condition
from specrank.errors import DegenerateInput, EmptyInput, MissingArtifact, ParseError, ValidationError
from specrank.stats.bootstrap import DEFAULT_LEVEL, DEFAULT_RESAMPLES, bootstrap_ci
from specrank.stats.correlation import pearson_r
from specrank.stats.regression import RegressionFit, logistic_fit

logger = logging.getLogger(__name__)

PREFERENCE = 'preference'
SPECIFICITY = 'specificity'

Pair = Tuple[str, str]


class PreferenceTrial(msgspec.Struct, frozen=True, omit_defaults=True):
    trial_id: str
    image_id: str
    condition_a: str
    condition_b: str
    length_a: int
    length_b: int
    chosen: Literal['a', 'b']
    participant_id: str
    study: Literal['preference', 'specificity'] = PREFERENCE

    @property
    def chosen_condition(self) -> str:
        return self.condition_a if self.chosen == 'a' else self.condition_b

    @property
    def pair(self) -> Pair:
        return tuple(sorted((self.condition_a, self.condition_b)))

    @property
    def item(self) -> Tuple[str, Pair]:
        return self.image_id, self.pair


def check_trial(trial: PreferenceTrial) -> Optional[str]:
    """Return a problem description, or None for a well-formed trial"""
    if trial.condition_a == trial.condition_b:
        return f"trial {trial.trial_id!r} compares {trial.condition_a!r} with itself"
    for condition in (trial.condition_a, trial.condition_b):
        if not is_valid_condition(condition):
            return f"trial {trial.trial_id!r} has unknown condition {condition!r}"
    if trial.length_a < 0 or trial.length_b < 0:
        return f"trial {trial.trial_id!r} has a negative length"
    return None


_decoder = msgspec.json.Decoder(PreferenceTrial)


def parse_trials(lines: Iterable[Union[str, bytes]]) -> List[PreferenceTrial]:
    trials = []
    seen = set()
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            trial = _decoder.decode(line)
        except (msgspec.ValidationError, msgspec.DecodeError) as e:
            raise ParseError(str(e), line_no)
        problem = check_trial(trial)
        if problem:
            raise ParseError(problem, line_no)
        if trial.trial_id in seen:
            raise ParseError(f"duplicate trial_id {trial.trial_id!r}", line_no)
        seen.add(trial.trial_id)
        trials.append(trial)
    return trials


def read_trials(path: Union[str, Path]) -> List[PreferenceTrial]:
    """
    Read line-delimited PreferenceTrial records

    Raises:
        MissingArtifact: path does not exist
        ParseError: malformed line (with its line number)
    """
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(f"Trial file not found: {path}")
    with open(path, 'rb') as f:
        return parse_trials(f)


def _study(trials: Iterable[PreferenceTrial], study: str) -> List[PreferenceTrial]:
    selected = [t for t in trials if t.study == study]
    if not selected:
        raise EmptyInput(f"No {study} trials")
    return selected


# ========== Preference Model ==========

@dataclass(frozen=True)
class PreferenceModel:
    reference: str
    fit: RegressionFit
    has_intercept: bool


def preference_design(trials: Sequence[PreferenceTrial], reference: str) -> Tuple[np.ndarray, Tuple[str, ...], bool]:
    """
    Design for chosen ~ condition + length on per-trial differences

    Each non-reference condition c contributes 1{a == c} - 1{b == c}; length
    enters as length_a - length_b. The intercept captures a bias toward side a
    and is dropped when a condition column is constant (conditions never
    swapped sides), which would otherwise make the design singular.
    """
    conditions = sorted({t.condition_a for t in trials} | {t.condition_b for t in trials})
    if reference not in conditions:
        raise ValidationError(f"Reference condition {reference!r} not among {conditions}")

    a = np.array([t.condition_a for t in trials])
    b = np.array([t.condition_b for t in trials])
    columns, names = [], []
    for condition in conditions:
        if condition == reference:
            continue
        columns.append((a == condition).astype(np.float64) - (b == condition).astype(np.float64))
        names.append(f'condition[{condition}]')
    columns.append(np.array([t.length_a - t.length_b for t in trials], dtype=np.float64))
    names.append('length_diff')

    has_intercept = not any(np.ptp(column) == 0 for column in columns[:-1])
    if not has_intercept:
        logger.warning("Dropping side-bias intercept: a condition never appears on both sides")
    else:
        columns.insert(0, np.ones(len(trials)))
        names.insert(0, 'intercept')
    return np.column_stack(columns), tuple(names), has_intercept


def fit_preference_model(trials: Iterable[PreferenceTrial], reference: str) -> PreferenceModel:
    """
    Logistic regression of choosing side a on condition and length

    Only trials from the preference study are used.

    Raises:
        EmptyInput: no preference trials
        ValidationError: reference level absent
        SeparationDetected / SingularDesign: from the logistic fit
    """
    selected = _study(trials, PREFERENCE)
    design, names, has_intercept = preference_design(selected, reference)
    y = np.array([1.0 if t.chosen == 'a' else 0.0 for t in selected])
    return PreferenceModel(reference, logistic_fit(design, y, names), has_intercept)


def fit_choice_model(trials: Iterable[PreferenceTrial], reference: str, study: str = SPECIFICITY) -> PreferenceModel:
    """Same model as fit_preference_model on another study's trials"""
    selected = _study(trials, study)
    design, names, has_intercept = preference_design(selected, reference)
    y = np.array([1.0 if t.chosen == 'a' else 0.0 for t in selected])
    return PreferenceModel(reference, logistic_fit(design, y, names), has_intercept)


# ========== Proportions ==========

def _pair_seed(seed: int, pair: Pair) -> int:
    key = zlib.crc32('|'.join(pair).encode('utf-8'))
    return int(np.random.SeedSequence([seed, key]).generate_state(1, dtype=np.uint64)[0])


def preference_proportions(
    trials: Iterable[PreferenceTrial],
    seed: int = 0,
    n_resamples: int = DEFAULT_RESAMPLES,
    level: float = DEFAULT_LEVEL,
) -> pd.DataFrame:
    """
    Share of trials choosing each condition, per condition pair and study

    Returns one row per (study, pair, condition) with the bootstrap interval of
    the share; the two shares of a pair sum to 1.
    """
    trials = list(trials)
    if not trials:
        raise EmptyInput("No trials to summarize")

    grouped: Dict[Tuple[str, Pair], List[PreferenceTrial]] = {}
    for t in trials:
        grouped.setdefault((t.study, t.pair), []).append(t)

    rows = []
    for (study, pair), group in sorted(grouped.items()):
        picks_second = np.array([1.0 if t.chosen_condition == pair[1] else 0.0 for t in group])
        for condition, choices in ((pair[0], 1.0 - picks_second), (pair[1], picks_second)):
            share = float(choices.mean())
            if choices.size >= 2:
                ci = bootstrap_ci(choices, np.mean, n_resamples, level, _pair_seed(seed, pair), 'share')
                low, high = ci.lower, ci.upper
            else:
                low = high = share
            rows.append({
                'study': study,
                'condition_1': pair[0],
                'condition_2': pair[1],
                'condition': condition,
                'share': share,
                'ci_low': low,
                'ci_high': high,
                'n': int(choices.size),
            })
    columns = ['study', 'condition_1', 'condition_2', 'condition', 'share', 'ci_low', 'ci_high', 'n']
    return pd.DataFrame(rows, columns=columns)


# ========== Cross-Study Analyses ==========

def item_choice_rates(trials: Iterable[PreferenceTrial]) -> Dict[Tuple[str, Pair], float]:
    """Per-item share of trials choosing the pair's second condition"""
    counts: Dict[Tuple[str, Pair], List[int]] = {}
    for t in trials:
        tally = counts.setdefault(t.item, [0, 0])
        tally[0] += t.chosen_condition == t.pair[1]
        tally[1] += 1
    return {item: chosen / total for item, (chosen, total) in counts.items()}


@dataclass(frozen=True)
class ChoiceAgreement:
    pair: Optional[Pair]
    r: float
    p: float
    n_items: int


def choice_agreement(
    preference_trials: Iterable[PreferenceTrial],
    specificity_trials: Iterable[PreferenceTrial],
    pair: Optional[Pair] = None,
) -> ChoiceAgreement:
    """
    Correlation between per-item choice rates in the two studies

    Only items observed in both studies count. With pair given, only items of
    that condition pair are used.

    Raises:
        EmptyInput: fewer than three shared items
        DegenerateInput: choice rates constant in either study
    """
    pair = tuple(sorted(pair)) if pair is not None else None
    preference = item_choice_rates(t for t in preference_trials if pair is None or t.pair == pair)
    specificity = item_choice_rates(t for t in specificity_trials if pair is None or t.pair == pair)
    shared = sorted(set(preference) & set(specificity))
    if len(shared) < 3:
        raise EmptyInput(f"Need at least 3 items observed in both studies, got {len(shared)}")
    r, p = pearson_r([preference[i] for i in shared], [specificity[i] for i in shared])
    return ChoiceAgreement(pair, r, p, len(shared))


def choice_agreement_table(
    preference_trials: Sequence[PreferenceTrial],
    specificity_trials: Sequence[PreferenceTrial],
) -> pd.DataFrame:
    """Overall agreement plus one row per condition pair that has enough shared items"""
    rows = []
    pairs = sorted({t.pair for t in preference_trials} & {t.pair for t in specificity_trials})
    for pair in [None] + pairs:
        try:
            result = choice_agreement(preference_trials, specificity_trials, pair)
        except (EmptyInput, DegenerateInput) as e:
            logger.warning(f"Skipping choice agreement for {pair or 'all pairs'}: {e}")
            continue
        rows.append({
            'pair': 'all' if pair is None else f'{pair[0]}|{pair[1]}',
            'r': result.r,
            'p': result.p,
            'n_items': result.n_items,
        })
    return pd.DataFrame(rows, columns=['pair', 'r', 'p', 'n_items'])


def fit_specificity_rate_model(
    preference_trials: Iterable[PreferenceTrial],
    specificity_trials: Iterable[PreferenceTrial],
    pair: Pair,
) -> RegressionFit:
    """
    Preference for the pair's second condition regressed on the item's specificity rate

    Each preference trial of the pair is one observation; its predictor is the
    share of specificity-study trials on the same item that picked the second
    condition. Preference trials on items absent from the specificity study
    are dropped.
    """
    pair = tuple(sorted(pair))
    rates = item_choice_rates(t for t in specificity_trials if t.pair == pair)
    observations = [
        (1.0 if t.chosen_condition == pair[1] else 0.0, rates[t.item])
        for t in preference_trials
        if t.pair == pair and t.item in rates
    ]
    if not observations:
        raise EmptyInput(f"No preference trials for {pair} with specificity data")
    y = np.array([chosen for chosen, _ in observations])
    design = np.column_stack([np.ones(len(observations)), [rate for _, rate in observations]])
    return logistic_fit(design, y, ('intercept', 'specificity_rate'))
