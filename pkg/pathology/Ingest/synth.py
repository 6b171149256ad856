"""
Synthetic sustained-vowel dataset.

Each clip is a harmonic series on a gender-typical fundamental. Healthy
voices are clean with a 1/h harmonic roll-off; every disease adds one
signature that survives the mel power representation:

    D1  steep harmonic tilt
    D2  5 Hz tremolo
    D3  fundamental jitter and wander
    D4  strong breath noise below 1.5 kHz
    D5  fast random shimmer (20-40 Hz)
    D6  notch over the 2nd-4th harmonics

Per-clip parameters are jittered from a generator keyed on (seed,
recording_id), so the data set does not depend on generation order.
"""

from __future__ import annotations

import numpy as np
from logzero import logger
from scipy.interpolate import interp1d
from scipy.signal import butter, sosfilt

from pathology.Augmentation.augment import task_rng
from pathology.Hierarchy.labels import Gender, parse_label
from pathology.Preprocessing.audio_core import AudioClip, ClipMeta

F0_BANDS = {Gender.MALE: (120.0, 10.0), Gender.FEMALE: (220.0, 15.0)}
MAX_HARMONIC_HZ = 8000.0
PEAK = 0.5
GAP_S = 0.3


def _envelope(rng, rate_hz, n, sample_rate):
    """Random smooth curve in [-1, 1] with knots every 1/rate_hz seconds."""
    duration = n / sample_rate
    knots = max(int(np.ceil(duration * rate_hz)) + 2, 4)
    times = np.linspace(0.0, duration, knots)
    curve = interp1d(times, rng.uniform(-1.0, 1.0, knots), kind='cubic')(np.arange(n) / sample_rate)
    return np.clip(curve, -1.0, 1.0)


def _voice(label, f0, n, sample_rate, rng):
    t = np.arange(n) / sample_rate
    tilt = rng.uniform(0.9, 1.1)
    instantaneous = np.full(n, f0)
    if label == 'D1':
        tilt = rng.uniform(2.2, 2.6)
    elif label == 'D3':
        wander = 0.06 * np.sin(2 * np.pi * rng.uniform(2.0, 4.0) * t + rng.uniform(0, 2 * np.pi))
        jitter = 0.04 * _envelope(rng, 60.0, n, sample_rate)
        instantaneous = f0 * (1.0 + wander + jitter)

    phase = 2 * np.pi * np.cumsum(instantaneous) / sample_rate
    signal = np.zeros(n)
    for h in range(1, int(MAX_HARMONIC_HZ // f0) + 1):
        gain = h ** -tilt
        if label == 'D6' and 1.8 <= h <= 4.5:
            gain *= 0.03
        signal += gain * np.sin(h * phase + rng.uniform(0, 2 * np.pi))

    if label == 'D2':
        signal *= 1.0 + rng.uniform(0.55, 0.65) * np.sin(2 * np.pi * 5.0 * t + rng.uniform(0, 2 * np.pi))
    elif label == 'D5':
        signal *= 1.0 + 0.6 * _envelope(rng, rng.uniform(20.0, 40.0), n, sample_rate)

    rms = np.sqrt(np.mean(signal ** 2))
    noise_level = 0.01
    if label == 'D4':
        noise_level = rng.uniform(0.8, 1.0)
    noise = rng.standard_normal(n)
    if label == 'D4':
        noise = sosfilt(butter(4, 1500.0, fs=sample_rate, output='sos'), noise)
    noise *= noise_level * rms / max(np.sqrt(np.mean(noise ** 2)), 1e-12)
    return signal + noise


def synth_clip(recording_id, gender, label, seed=42, duration_s=1.8, rates=(44100, 48000, 50000),
               silence_fraction=0.2):
    rng = task_rng(seed, 'synth', recording_id)
    gender = Gender(gender)
    label = parse_label(label).value
    sample_rate = int(rng.choice(rates))
    centre, spread = F0_BANDS[gender]
    f0 = rng.uniform(centre - spread, centre + spread)
    n = int(round(duration_s * sample_rate))

    samples = _voice(label, f0, n, sample_rate, rng)
    samples *= PEAK / np.abs(samples).max()
    if rng.random() < silence_fraction:
        gap = int(GAP_S * sample_rate)
        start = int(rng.integers(n // 4, n - n // 4 - gap))
        samples[start:start + gap] = 0.0
    meta = ClipMeta(gender=gender.value, label=label, dataset='synthetic')
    return AudioClip(samples=samples, sample_rate=sample_rate, recording_id=recording_id, meta=meta)


def synth_dataset(config):
    """Recordings per config.synth_counts, each class split evenly between genders."""
    clips = []
    for label, count in config.synth_counts:
        label = parse_label(label).value
        per_gender = {Gender.MALE: count // 2, Gender.FEMALE: count - count // 2}
        for gender, total in per_gender.items():
            for i in range(total):
                recording_id = f"syn_{label}_{gender.value}_{i:04d}"
                clips.append(synth_clip(recording_id, gender, label, seed=config.seed,
                                        duration_s=config.synth_duration_s, rates=config.synth_rates,
                                        silence_fraction=config.synth_silence_fraction))
        logger.info(f"synthesized {count} {label} recordings")
    return clips
