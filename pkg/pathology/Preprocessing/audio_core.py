"""
Waveform preprocessing: RMS silence removal with crossfade reconstruction,
min-max normalization and fixed-length segmentation.

All functions are pure: clips are immutable and every operation returns a
new AudioClip.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import librosa
import numpy as np
from logzero import logger

from pathology.exceptions import AudioError


@dataclass(frozen=True)
class ClipMeta:
    gender: str
    label: str
    dataset: str = 'synthetic'


@dataclass(frozen=True, eq=False)
class AudioClip:
    samples: np.ndarray
    sample_rate: int
    recording_id: str
    meta: Optional[ClipMeta] = None
    augmented: bool = False
    segment_index: Optional[int] = None
    # distinguishes synthesized copies that share a source recording_id
    variant: str = ''

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise AudioError(f"sample rate must be positive, got {self.sample_rate}")
        samples = np.array(self.samples, dtype=np.float64).reshape(-1)
        samples.setflags(write=False)
        object.__setattr__(self, 'samples', samples)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self):
        return len(self) / self.sample_rate

    @property
    def gender(self):
        return self.meta.gender if self.meta else None

    @property
    def label(self):
        return self.meta.label if self.meta else None

    @property
    def key(self):
        """Unique name of this clip inside a dataset (recording, segment, variant)."""
        parts = [self.recording_id]
        if self.variant:
            parts.append(self.variant)
        if self.segment_index is not None:
            parts.append(f"s{self.segment_index:03d}")
        return '__'.join(parts)

    def with_samples(self, samples, **changes):
        return replace(self, samples=samples, **changes)


@dataclass(frozen=True)
class FrameSpec:
    window: int = 2048
    hop: int = 512

    def __post_init__(self):
        if not 0 < self.hop <= self.window:
            raise AudioError(f"frame spec needs 0 < hop <= window, got hop={self.hop} window={self.window}")

    def frame_count(self, n_samples):
        if n_samples < self.window:
            return 0
        return 1 + (n_samples - self.window) // self.hop


@dataclass(frozen=True)
class VoicedMask:
    flags: np.ndarray
    frame_spec: FrameSpec = field(default_factory=FrameSpec)
    threshold: float = 1e-3

    def ranges(self, n_samples):
        """Union of voiced frame spans as half-open sample ranges.

        The final frame's span extends to the end of the signal, since the
        trailing samples shorter than one hop belong to no other frame.
        """
        spans = []
        window, hop = self.frame_spec.window, self.frame_spec.hop
        last = len(self.flags) - 1
        for i in np.flatnonzero(self.flags):
            start = int(i) * hop
            stop = n_samples if i == last else min(start + window, n_samples)
            if spans and start <= spans[-1][1]:
                spans[-1][1] = max(spans[-1][1], stop)
            else:
                spans.append([start, stop])
        return [(start, stop) for start, stop in spans]


def rms_frames(clip, spec=FrameSpec()):
    """RMS energy per frame, no padding: 1 + (N - W) // H frames."""
    if len(clip) < spec.window:
        raise AudioError(f"clip {clip.recording_id} too short: {len(clip)} samples < window {spec.window}")
    rms = librosa.feature.rms(
        y=clip.samples, frame_length=spec.window, hop_length=spec.hop, center=False, dtype=np.float64
    )
    return rms[0].astype(np.float64)


def voiced_mask(clip, spec=FrameSpec(), threshold=1e-3):
    return VoicedMask(flags=rms_frames(clip, spec) >= threshold, frame_spec=spec, threshold=threshold)


def crossfade_join(tail, head, V):
    """Join two sample sequences with a linear crossfade over V samples."""
    tail = np.asarray(tail, dtype=np.float64)
    head = np.asarray(head, dtype=np.float64)
    if V < 2:
        raise AudioError(f"crossfade interval must be at least 2, got {V}")
    if len(tail) < V or len(head) < V:
        raise AudioError(f"crossfade longer than segment: V={V}, segments {len(tail)} and {len(head)}")
    alpha = np.arange(V, dtype=np.float64) / (V - 1)
    blended = (1.0 - alpha) * tail[len(tail) - V:] + alpha * head[:V]
    return np.concatenate([tail[:len(tail) - V], blended, head[V:]])


def remove_silence(clip, spec=FrameSpec(), threshold=1e-3, V=512):
    mask = voiced_mask(clip, spec, threshold)
    if not mask.flags.any():
        raise AudioError(f"fully silent recording: {clip.recording_id}")
    if mask.flags.all():
        return clip

    ranges = mask.ranges(len(clip))
    samples = clip.samples[ranges[0][0]:ranges[0][1]]
    for start, stop in ranges[1:]:
        samples = crossfade_join(samples, clip.samples[start:stop], V)
    logger.debug(f"{clip.recording_id}: kept {len(ranges)} voiced ranges, {len(samples)}/{len(clip)} samples")
    return clip.with_samples(samples)


def minmax_normalize(clip):
    if len(clip) == 0:
        raise AudioError(f"cannot normalize empty clip {clip.recording_id}")
    low, high = clip.samples.min(), clip.samples.max()
    if high == low:
        raise AudioError(f"degenerate amplitude range in {clip.recording_id}: constant value {low}")
    return clip.with_samples((clip.samples - low) / (high - low))


def segment(clip, window_s=1.0, hop_s=0.4):
    """Fixed-length segments; clips shorter than one window yield none."""
    sr = clip.sample_rate
    width = int(round(window_s * sr))
    segments = []
    k = 0
    while True:
        start = int(round(k * hop_s * sr))
        if start + width > len(clip):
            break
        segments.append(clip.with_samples(clip.samples[start:start + width], segment_index=k))
        k += 1
    return segments


def preprocess_recording(clip, spec=FrameSpec(), threshold=1e-3, V=512, min_duration_s=1.0):
    """Silence removal then normalization.

    Returns (clip, trimmed); clips left shorter than `min_duration_s` raise
    AudioError so the caller can exclude them.
    """
    voiced = remove_silence(clip, spec, threshold, V)
    trimmed = voiced is not clip
    if voiced.duration < min_duration_s:
        raise AudioError(f"{clip.recording_id} shorter than {min_duration_s} s after silence removal")
    return minmax_normalize(voiced), trimmed
