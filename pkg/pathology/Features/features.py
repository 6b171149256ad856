"""
Rate-adaptive Mel spectrograms.

STFT parameters scale with the sampling rate so that one second of audio at
any rate in the 40-50 kHz envelope yields the same 128 x 98 grid.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional

import librosa
import numpy as np
from logzero import logger

from pathology.exceptions import FeatureError

N_MELS = 128
N_FRAMES = 98
REFERENCE_RATE = 50000
REFERENCE_HOP = 512
REFERENCE_HALF_WINDOW = 1024
RATE_ENVELOPE = (40000, 50000)
DB_FLOOR = 1e-10
# lowest Nyquist of the rate envelope; a shared band keeps filter centres identical across rates
SHARED_FMAX = 20000.0


@dataclass(frozen=True)
class StftParams:
    n_fft: int
    win_length: int
    hop_length: int
    centered: bool = True
    padding: str = 'reflect'

    def __post_init__(self):
        if not self.hop_length <= self.win_length <= self.n_fft:
            raise FeatureError(f"need hop <= win <= n_fft, got {self.hop_length}, {self.win_length}, {self.n_fft}")


@dataclass(frozen=True, eq=False)
class MelSpectrogram:
    power: np.ndarray
    source_rate: int
    recording_id: str
    meta: Optional[object] = None
    key: str = ''

    def __post_init__(self):
        power = np.asarray(self.power)
        if power.ndim != 2:
            raise FeatureError(f"spectrogram must be 2-D, got shape {power.shape}")
        if (power < 0).any():
            raise FeatureError(f"spectrogram {self.key or self.recording_id} has negative power")
        object.__setattr__(self, 'power', power)
        if not self.key:
            object.__setattr__(self, 'key', self.recording_id)

    @property
    def shape(self):
        return self.power.shape

    @property
    def db(self):
        return power_to_db(self.power)


@dataclass(frozen=True, eq=False)
class LabeledExample:
    """Spectrogram plus the labels a classifier trains on."""
    spectrogram: MelSpectrogram
    gender: str
    label: str
    augmented: bool = False
    pool: str = ''
    extra: dict = field(default_factory=dict)

    @property
    def recording_id(self):
        return self.spectrogram.recording_id

    @property
    def key(self):
        return self.spectrogram.key


def adapt_params(sample_rate):
    """STFT parameters for a rate, scaled from 2048/512 at 50 kHz."""
    low, high = RATE_ENVELOPE
    if not low <= sample_rate <= high:
        raise FeatureError(f"sample rate {sample_rate} Hz outside the {low}-{high} Hz envelope")
    hop = int(round(sample_rate * REFERENCE_HOP / REFERENCE_RATE))
    win = 2 * int(round(sample_rate * REFERENCE_HALF_WINDOW / REFERENCE_RATE))
    n_fft = 1 << (win - 1).bit_length()
    return StftParams(n_fft=n_fft, win_length=win, hop_length=hop)


def stft_power(clip, params):
    """Centered, reflect-padded Hann STFT power with n_fft // 2 + 1 rows."""
    spectrum = librosa.stft(
        clip.samples,
        n_fft=params.n_fft,
        hop_length=params.hop_length,
        win_length=params.win_length,
        window='hann',
        center=params.centered,
        pad_mode=params.padding,
    )
    return np.abs(spectrum) ** 2


def analysis_gain(params):
    """n_fft times the Hann window energy: the factor a sinusoid's |STFT|^2 carries."""
    window = librosa.filters.get_window('hann', params.win_length, fftbins=True)
    return params.n_fft * float(np.sum(window ** 2))


def level_scale(params):
    """Power correction that puts any rate on the 50 kHz analysis level."""
    return analysis_gain(adapt_params(REFERENCE_RATE)) / analysis_gain(params)


def _band_edge(sample_rate, fmax):
    return sample_rate / 2 if fmax is None else min(float(fmax), sample_rate / 2)


def mel_filterbank(sample_rate, n_fft, n_mels=N_MELS, fmax=SHARED_FMAX):
    """Slaney-scale, area-normalized triangular filters from 0 Hz to fmax.

    fmax=None spans the full Nyquist band; it is capped at Nyquist either way.
    """
    if n_mels < 1:
        raise FeatureError(f"n_mels must be positive, got {n_mels}")
    fmax = _band_edge(sample_rate, fmax)
    bank = librosa.filters.mel(
        sr=sample_rate, n_fft=n_fft, n_mels=n_mels, fmin=0.0, fmax=fmax,
        htk=False, norm='slaney', dtype=np.float64,
    )
    empty = np.flatnonzero(bank.sum(axis=1) <= 0)
    if empty.size:
        raise FeatureError(f"mel filters {empty.tolist()} have no support at {sample_rate} Hz / n_fft {n_fft}")
    return bank


def mel_center_frequencies(sample_rate, n_mels=N_MELS, fmax=SHARED_FMAX):
    fmax = _band_edge(sample_rate, fmax)
    return librosa.mel_frequencies(n_mels=n_mels + 2, fmin=0.0, fmax=fmax, htk=False)[1:-1]


def fit_frames(power, n_frames=N_FRAMES):
    """Truncate extra frames or repeat the final frame to reach n_frames."""
    have = power.shape[1]
    if have > n_frames:
        return power[:, :n_frames]
    if have < n_frames:
        if have == 0:
            raise FeatureError("no STFT frames to repair")
        tail = np.repeat(power[:, -1:], n_frames - have, axis=1)
        return np.concatenate([power, tail], axis=1)
    return power


def mel_spectrogram(clip, n_mels=N_MELS, n_frames=N_FRAMES, fmax=SHARED_FMAX):
    """128 x 98 mel power of a 1-s clip, comparable across the 40-50 kHz envelope.

    The filters stop at 20 kHz instead of each rate's Nyquist. With a Nyquist
    band edge the filter centres move with the rate, so one frequency lands in
    different rows at 44.1 and 50 kHz. Power is rescaled by `level_scale`
    because the window grows with the rate and would otherwise lift the level
    by about 0.6 dB between 44.1 and 50 kHz.
    """
    params = adapt_params(clip.sample_rate)
    power = stft_power(clip, params) * level_scale(params)
    if abs(power.shape[1] - n_frames) > 1:
        logger.warning(f"{clip.key}: {power.shape[1]} STFT frames, expected about {n_frames}")
    bank = mel_filterbank(clip.sample_rate, params.n_fft, n_mels, fmax)
    mel = fit_frames(bank @ power, n_frames)
    return MelSpectrogram(
        power=mel, source_rate=clip.sample_rate, recording_id=clip.recording_id, meta=clip.meta, key=clip.key,
    )


def power_to_db(S):
    return librosa.power_to_db(np.asarray(S, dtype=np.float64), ref=1.0, amin=DB_FLOOR, top_db=None)


def mean_power_db(spec):
    return float(np.mean(power_to_db(spec.power)))


def mean_spectrogram(group):
    group = list(group)
    if not group:
        raise FeatureError("cannot average an empty group of spectrograms")
    shapes = {spec.shape for spec in group}
    if len(shapes) != 1:
        raise FeatureError(f"spectrogram shapes differ: {sorted(shapes)}")
    first = group[0]
    if len(group) == 1:
        return first
    power = np.mean(np.stack([spec.power for spec in group]), axis=0)
    return MelSpectrogram(power=power, source_rate=first.source_rate, recording_id=first.recording_id,
                          meta=first.meta, key='mean')


def model_input(spec):
    """Per-example min-max scaling of the power spectrogram to [0, 1]."""
    power = spec.power.astype(np.float64)
    low, high = power.min(), power.max()
    if high == low:
        return np.zeros_like(power)
    return (power - low) / (high - low)


@dataclass(frozen=True)
class OutlierThresholds:
    floor_db: float = -60.0
    spike_db: float = 20.0
    flatness: float = 0.5
    erratic_jumps: int = 4


def spectral_flatness(power):
    """Median over frames of geometric / arithmetic mean across mel bins."""
    power = np.maximum(power, DB_FLOOR)
    geometric = np.exp(np.mean(np.log(power), axis=0))
    arithmetic = np.mean(power, axis=0)
    return float(np.median(geometric / arithmetic))


def outlier_reasons(spec, thresholds=OutlierThresholds()):
    if float(power_to_db(spec.power.mean())) < thresholds.floor_db:
        return ['absence of valuable signal']
    reasons = []
    frame_db = power_to_db(spec.power.mean(axis=0))
    jumps = np.abs(np.diff(frame_db))
    if jumps.size and jumps.max() > thresholds.spike_db:
        reasons.append('extreme transient shock')
    if spectral_flatness(spec.power) > thresholds.flatness:
        reasons.append('dominant global noise')
    if np.count_nonzero(jumps > thresholds.spike_db / 2) > thresholds.erratic_jumps:
        reasons.append('erratic spiking signal')
    return reasons


def flag_outliers(specs, thresholds=OutlierThresholds()):
    """Advisory outlier flags per recording; exclusion stays a manual decision."""
    flagged = defaultdict(set)
    for spec in specs:
        for reason in outlier_reasons(spec, thresholds):
            flagged[spec.recording_id].add(reason)
    return [(recording_id, tuple(sorted(reasons))) for recording_id, reasons in sorted(flagged.items())]
