"""
Class-balancing augmentation on raw audio: multi-scale sinc resampling and
audio-domain time warping.

Randomness is always derived from (seed, clip key) so that results do not
depend on processing order.
"""

from __future__ import annotations

import math
import zlib
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from django.db import models
from logzero import logger
from scipy.signal import firwin, resample_poly

from pathology.exceptions import AugmentationError
from pathology.Preprocessing.audio_core import crossfade_join

# Kaiser-windowed sinc: 64 zero-crossings per side, about -130 dB sidelobes
ZERO_CROSSINGS = 64
KAISER_BETA = 14.77


class Strategy(models.TextChoices):
    RESAMPLE = 'resample', 'Multi-scale resampling'
    TIMEWARP = 'timewarp', 'Time warping'


@dataclass(frozen=True)
class RateGrid:
    low: int = 40000
    high: int = 50000
    step: int = 125

    def __post_init__(self):
        if self.step <= 0 or self.high < self.low or (self.high - self.low) % self.step:
            raise AugmentationError(f"invalid rate grid {self.low}..{self.high} step {self.step}")

    def candidates(self):
        return np.arange(self.low, self.high + 1, self.step, dtype=np.int64)


@dataclass(frozen=True)
class WarpPlan:
    permutation: tuple
    k: int = 5
    crossfade_v: int = 32

    def __post_init__(self):
        permutation = tuple(int(i) for i in self.permutation)
        object.__setattr__(self, 'permutation', permutation)
        if sorted(permutation) != list(range(self.k)):
            raise AugmentationError(f"{permutation} is not a permutation of 0..{self.k - 1}")
        if permutation == tuple(range(self.k)):
            raise AugmentationError("identity permutation does not warp anything")

    @classmethod
    def draw(cls, rng, k=5, crossfade_v=32):
        """Random non-identity plan; identity draws are re-drawn."""
        if k < 2:
            raise AugmentationError(f"time warping needs at least 2 pieces, got {k}")
        while True:
            permutation = tuple(int(i) for i in rng.permutation(k))
            if permutation != tuple(range(k)):
                return cls(permutation=permutation, k=k, crossfade_v=crossfade_v)


def stable_hash(text):
    return zlib.crc32(str(text).encode('utf-8'))


def task_rng(seed, *keys):
    """Generator for one unit of work, independent of scheduling order."""
    entropy = [int(seed)] + [k if isinstance(k, int) else stable_hash(k) for k in keys]
    return np.random.default_rng(entropy)


def resample(clip, target_rate):
    if target_rate <= 0:
        raise AugmentationError(f"target rate must be positive, got {target_rate}")
    source_rate = clip.sample_rate
    if target_rate == source_rate:
        return clip.with_samples(clip.samples)

    g = math.gcd(int(source_rate), int(target_rate))
    up, down = int(target_rate) // g, int(source_rate) // g
    max_ud = max(up, down)
    # cutoff at the lower of the two Nyquist rates, relative to the upsampled rate
    taps = firwin(2 * ZERO_CROSSINGS * max_ud + 1, 1.0 / max_ud, window=('kaiser', KAISER_BETA))
    samples = resample_poly(clip.samples, up, down, window=taps)
    return clip.with_samples(samples, sample_rate=int(target_rate))


def draw_rates(grid, n, exclude, rng):
    if n < 0:
        raise AugmentationError(f"cannot draw {n} rates")
    candidates = grid.candidates()
    candidates = candidates[candidates != exclude]
    if n == 0:
        return []
    return [int(rate) for rate in rng.choice(candidates, size=n, replace=True)]


def time_warp(clip, plan):
    n = len(clip)
    piece = n // plan.k
    if piece < plan.crossfade_v:
        raise AugmentationError(
            f"clip {clip.key} too short to warp: {n} samples for {plan.k} pieces with crossfade {plan.crossfade_v}"
        )
    bounds = [i * piece for i in range(plan.k)] + [n]
    pieces = [clip.samples[bounds[i]:bounds[i + 1]] for i in range(plan.k)]

    samples = pieces[plan.permutation[0]]
    for index in plan.permutation[1:]:
        samples = crossfade_join(samples, pieces[index], plan.crossfade_v)

    if len(samples) < n:
        samples = np.pad(samples, (0, n - len(samples)), mode='edge')
    return clip.with_samples(samples[:n])


def balance(clips, strategy, key, seed=42, target_class=None, classes=None,
            grid=RateGrid(), warp_pieces=5, warp_crossfade=32, tag=''):
    """Append synthesized clips until every class matches the target class count.

    `key` maps a clip to its class. Originals are kept untouched and come first;
    synthesized clips are flagged `augmented` and keep the source recording_id.
    """
    strategy = Strategy(strategy)
    if not clips:
        raise AugmentationError("cannot balance an empty dataset")

    groups = defaultdict(list)
    for clip in clips:
        groups[key(clip)].append(clip)
    for label in classes or ():
        if not groups.get(label):
            raise AugmentationError(f"cannot augment empty class {label}")

    counts = {label: len(members) for label, members in groups.items()}
    largest = max(counts.values())
    if target_class is None:
        target_class = sorted(label for label, count in counts.items() if count == largest)[0]
    target_count = counts.get(target_class, 0)
    if target_count != largest:
        raise AugmentationError(
            f"target class {target_class} has {target_count} clips but the largest class has {largest}"
        )

    synthesized = []
    for label in sorted(groups):
        originals = sorted(groups[label], key=lambda clip: clip.key)
        needed = target_count - len(originals)
        if needed <= 0:
            continue
        picks = task_rng(seed, 'balance', str(label)).integers(0, len(originals), size=needed)
        for ordinal, pick in enumerate(picks):
            source = originals[int(pick)]
            rng = task_rng(seed, source.key, ordinal)
            if strategy == Strategy.RESAMPLE:
                rate = draw_rates(grid, 1, source.sample_rate, rng)[0]
                clip = resample(source, rate)
                variant = f"{tag}rs{ordinal:05d}"
            else:
                plan = WarpPlan.draw(rng, warp_pieces, warp_crossfade)
                clip = time_warp(source, plan)
                variant = f"{tag}tw{ordinal:05d}"
            synthesized.append(clip.with_samples(clip.samples, augmented=True, variant=_join_variant(source, variant)))
        logger.info(f"{strategy.value}: class {label} {len(originals)} -> {target_count} (+{needed})")
    return list(clips) + synthesized


def _join_variant(source, variant):
    return f"{source.variant}-{variant}" if source.variant else variant
