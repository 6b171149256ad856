"""
Gender power statistics.

Segment mean powers are averaged per recording first, then summarized per
(label, gender). The female/male comparison uses Welch's t-test when both
sides pass Shapiro-Wilk at alpha, otherwise Mann-Whitney U.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np
import pandas as pd
from logzero import logger
from scipy import stats

from pathology.exceptions import AnalysisError
from pathology.Features.features import mean_spectrogram
from pathology.Hierarchy.labels import FINAL_LABELS, Gender

ALPHA = 0.05
EXACT_LIMIT = 20


def normality_test(samples):
    """Shapiro-Wilk p-value; constant samples raise AnalysisError."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size < 3:
        raise AnalysisError(f"normality test needs at least 3 values, got {samples.size}")
    if np.ptp(samples) == 0:
        raise AnalysisError("normality test on a constant sample")
    return float(stats.shapiro(samples).pvalue)


def t_test(a, b):
    """Two-sided Welch t-test; returns (statistic, p_value)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise AnalysisError(f"t-test needs at least 2 values per group, got {a.size} and {b.size}")
    if np.ptp(a) == 0 and np.ptp(b) == 0:
        if a[0] == b[0]:
            return 0.0, 1.0
        return (float('inf') if a[0] > b[0] else float('-inf')), 0.0
    result = stats.ttest_ind(a, b, equal_var=False)
    return float(result.statistic), float(result.pvalue)


def mann_whitney_u(a, b):
    """Two-sided Mann-Whitney U for the first sample; returns (U, p_value).

    Exact distribution when both sides have at most 20 values and there are
    no ties, otherwise the tie-corrected normal approximation.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 1 or b.size < 1:
        raise AnalysisError("Mann-Whitney U needs at least one value per group")
    tied = np.unique(np.concatenate([a, b])).size < a.size + b.size
    method = 'exact' if max(a.size, b.size) <= EXACT_LIMIT and not tied else 'asymptotic'
    result = stats.mannwhitneyu(a, b, alternative='two-sided', method=method)
    return float(result.statistic), float(min(result.pvalue, 1.0))


def _is_normal(values):
    try:
        return normality_test(values) > ALPHA
    except AnalysisError:
        return False


@dataclass
class GroupStats:
    label: str
    female_mean: Optional[float]
    female_std: Optional[float]
    female_n: int
    male_mean: Optional[float]
    male_std: Optional[float]
    male_n: int
    delta: Optional[float]
    test: Optional[str]
    p_value: Optional[float]

    @property
    def significant(self):
        return self.p_value is not None and self.p_value < ALPHA

    def to_dict(self):
        return {**asdict(self), 'significant': self.significant}


def recording_powers(segments):
    """Per-recording mean of segment powers from rows of recording_id, gender, label, mean_power_db."""
    frame = pd.DataFrame(segments, columns=['recording_id', 'gender', 'label', 'mean_power_db'])
    if frame.empty:
        raise AnalysisError("no segment powers to aggregate")
    return (frame.groupby(['recording_id', 'gender', 'label'], as_index=False)['mean_power_db'].mean()
            .sort_values('recording_id', kind='mergesort').reset_index(drop=True))


def _moments(values):
    if values.size == 0:
        return None, None
    std = float(np.std(values, ddof=1)) if values.size > 1 else None
    return float(np.mean(values)), std


def gender_power_report(segments):
    """GroupStats per label present, in label order."""
    recordings = recording_powers(segments)
    rows = []
    for label in FINAL_LABELS:
        group = recordings[recordings['label'] == label.value]
        if group.empty:
            continue
        female = np.sort(group.loc[group['gender'] == Gender.FEMALE.value, 'mean_power_db'].to_numpy())
        male = np.sort(group.loc[group['gender'] == Gender.MALE.value, 'mean_power_db'].to_numpy())
        female_mean, female_std = _moments(female)
        male_mean, male_std = _moments(male)
        delta = female_mean - male_mean if female.size and male.size else None

        test = p_value = None
        if female.size >= 2 and male.size >= 2:
            if _is_normal(female) and _is_normal(male):
                test, (_, p_value) = 't', t_test(female, male)
            else:
                test, (_, p_value) = 'mann-whitney', mann_whitney_u(female, male)
        else:
            logger.warning(f"{label.value}: {female.size} female / {male.size} male recordings, no significance test")
        rows.append(GroupStats(label.value, female_mean, female_std, int(female.size),
                               male_mean, male_std, int(male.size), delta, test, p_value))
    return rows


def format_power_table(rows):
    def cell(mean, std):
        if mean is None:
            return '-'
        return f"{mean:.2f} ± {std:.2f}" if std is not None else f"{mean:.2f}"

    frame = pd.DataFrame([{
        'Label': row.label,
        'Female (dB)': cell(row.female_mean, row.female_std),
        'Male (dB)': cell(row.male_mean, row.male_std),
        'Δ (F-M)': '-' if row.delta is None else f"{row.delta:+.2f}" + ('*' if row.significant else ''),
        'Test': row.test or '-',
        'p': '-' if row.p_value is None else f"{row.p_value:.4g}",
    } for row in rows])
    return frame.to_string(index=False)


def mean_spectrograms(examples):
    """Average spectrogram per (label, gender) group, keyed 'D1_F' and so on."""
    groups = {}
    for example in examples:
        groups.setdefault(f"{example.label}_{example.gender}", []).append(example.spectrogram)
    return {key: replace(mean_spectrogram(sorted(specs, key=lambda s: s.key)), key=key)
            for key, specs in sorted(groups.items())}
