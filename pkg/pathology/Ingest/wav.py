"""WAV decoding and writing through soundfile."""

import io
from pathlib import Path

import numpy as np
import soundfile as sf

from pathology.exceptions import IngestError
from pathology.Ingest.artifacts import atomic_write_bytes
from pathology.Preprocessing.audio_core import AudioClip

SUPPORTED_SUBTYPES = ('PCM_16', 'PCM_24', 'PCM_32', 'FLOAT')


def decode_wav(path, recording_id=None, meta=None):
    """Mono float64 clip in [-1, 1]; integer PCM is divided by full scale, stereo is averaged."""
    path = Path(path)
    try:
        info = sf.info(str(path))
    except (RuntimeError, OSError) as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    if info.format not in ('WAV', 'WAVEX'):
        raise IngestError(f"{path} is {info.format}, not a WAV file")
    if info.subtype not in SUPPORTED_SUBTYPES:
        raise IngestError(f"{path}: unsupported codec {info.subtype}, expected one of {SUPPORTED_SUBTYPES}")
    if info.channels not in (1, 2):
        raise IngestError(f"{path}: {info.channels} channels, expected mono or stereo")

    samples, rate = sf.read(str(path), dtype='float64', always_2d=True)
    return AudioClip(samples=samples.mean(axis=1), sample_rate=int(rate),
                     recording_id=recording_id or path.stem, meta=meta)


def write_wav(path, clip):
    """32-bit float WAV, written atomically."""
    buffer = io.BytesIO()
    sf.write(buffer, np.asarray(clip.samples, dtype=np.float32), clip.sample_rate, subtype='FLOAT', format='WAV')
    atomic_write_bytes(path, buffer.getvalue())
