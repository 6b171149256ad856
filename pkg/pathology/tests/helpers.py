import numpy as np

from pathology.Features.features import LabeledExample, MelSpectrogram
from pathology.Preprocessing.audio_core import AudioClip, ClipMeta


def tone(freq=440.0, duration=1.0, rate=50000, amplitude=0.5, recording_id='tone', gender='M', label='HC'):
    t = np.arange(int(round(duration * rate))) / rate
    return AudioClip(samples=amplitude * np.sin(2 * np.pi * freq * t), sample_rate=rate, recording_id=recording_id,
                     meta=ClipMeta(gender=gender, label=label))


def noise_clip(duration=1.0, rate=50000, seed=0, recording_id='noise', gender='F', label='D1'):
    rng = np.random.default_rng(seed)
    return AudioClip(samples=0.3 * rng.standard_normal(int(round(duration * rate))), sample_rate=rate,
                     recording_id=recording_id, meta=ClipMeta(gender=gender, label=label))


def example(power, recording_id='r', gender='M', label='HC', key=None, pool=''):
    spec = MelSpectrogram(power=np.asarray(power, dtype=np.float64), source_rate=50000, recording_id=recording_id,
                          meta=ClipMeta(gender=gender, label=label), key=key or recording_id)
    return LabeledExample(spectrogram=spec, gender=gender, label=label, pool=pool)
