"""
Pipeline configuration.

A config file uses the same key=value syntax as `.env` and is read with
python-dotenv. Values left out keep their defaults; list values are
comma-separated, and synth_counts is written as `HC=600,D1=120,...`.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path

from dotenv import dotenv_values
from logzero import logger

from pathology.Augmentation.augment import RateGrid, Strategy
from pathology.exceptions import IngestError
from pathology.Features.features import OutlierThresholds
from pathology.Preprocessing.audio_core import FrameSpec

EXPERIMENTS = ('Exp1', 'Exp2', 'Exp3.1', 'Exp3.2')
SPLIT_UNITS = ('recording', 'segment')
DEFAULT_SYNTH_COUNTS = (('HC', 600), ('D1', 120), ('D2', 100), ('D3', 90), ('D4', 80), ('D5', 70), ('D6', 60))


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 42
    experiment: str = 'Exp2'
    augmentation: str = 'timewarp'
    split_unit: str = 'recording'
    split_ratio: float = 0.8

    frame_window: int = 2048
    frame_hop: int = 512
    silence_threshold: float = 1e-3
    crossfade: int = 512
    segment_window_s: float = 1.0
    segment_hop_s: float = 0.4

    rate_low: int = 40000
    rate_high: int = 50000
    rate_step: int = 125
    warp_pieces: int = 5
    warp_crossfade: int = 32

    n_mels: int = 128
    n_frames: int = 98
    mel_fmax: float = 20000.0

    learning_rates: tuple = (1e-3, 1e-4, 1e-5)
    batch_sizes: tuple = (32, 64)
    epochs: tuple = (10, 20, 30)
    folds: int = 5
    widths: tuple = (8, 16, 32, 64, 64)
    activation: str = 'relu'
    workers: int = 1

    outlier_floor_db: float = -60.0
    outlier_spike_db: float = 20.0
    outlier_flatness: float = 0.5
    cka_probe_cap: int = 256

    manifest: str = ''
    cache_dir: str = 'cache'

    synth_counts: tuple = DEFAULT_SYNTH_COUNTS
    synth_duration_s: float = 1.8
    synth_rates: tuple = (44100, 48000, 50000)
    synth_silence_fraction: float = 0.2

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise IngestError(f"unknown experiment {self.experiment!r}, expected one of {EXPERIMENTS}")
        if self.augmentation not in Strategy.values:
            raise IngestError(f"unknown augmentation {self.augmentation!r}, expected one of {Strategy.values}")
        if self.split_unit not in SPLIT_UNITS:
            raise IngestError(f"unknown split unit {self.split_unit!r}, expected one of {SPLIT_UNITS}")
        if not 0.0 < self.split_ratio < 1.0:
            raise IngestError(f"split_ratio must lie in (0, 1), got {self.split_ratio}")
        if any(count < 10 for _, count in self.synth_counts):
            raise IngestError(f"synth_counts needs at least 10 recordings per class, got {dict(self.synth_counts)}")

    # derived views

    @property
    def frame_spec(self):
        return FrameSpec(window=self.frame_window, hop=self.frame_hop)

    @property
    def rate_grid(self):
        return RateGrid(low=self.rate_low, high=self.rate_high, step=self.rate_step)

    @property
    def outlier_thresholds(self):
        return OutlierThresholds(floor_db=self.outlier_floor_db, spike_db=self.outlier_spike_db,
                                 flatness=self.outlier_flatness)

    @property
    def cache_path(self):
        return Path(self.cache_dir)

    def render(self, names=None):
        """Canonical key=value text, one line per field in declaration order."""
        return ''.join(f"{f.name}={_format(getattr(self, f.name))}\n" for f in dataclasses.fields(self)
                       if names is None or f.name in names)

    def digest(self, *names):
        """SHA-256 of the rendering, restricted to `names` when given."""
        return hashlib.sha256(self.render(set(names) or None).encode('utf-8')).hexdigest()

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def _format(value):
    if isinstance(value, tuple):
        return ','.join(_format_item(item) for item in value)
    return _format_item(value)


def _format_item(item):
    if isinstance(item, tuple):
        return f"{item[0]}={item[1]}"
    return f"{item:g}" if isinstance(item, float) else str(item)


FIELDS = {f.name: f for f in dataclasses.fields(PipelineConfig)}


def _parse(name, raw):
    default = FIELDS[name].default
    raw = raw.strip()
    try:
        if name == 'synth_counts':
            pairs = []
            for item in filter(None, (part.strip() for part in raw.split(','))):
                label, _, count = item.partition('=')
                pairs.append((label.strip().upper(), int(count)))
            return tuple(pairs)
        if isinstance(default, tuple):
            cast = type(default[0])
            return tuple(cast(part.strip()) for part in raw.split(',') if part.strip())
        if isinstance(default, bool):
            return raw.lower() in ('1', 'true', 'yes')
        return type(default)(raw)
    except ValueError:
        raise IngestError(f"invalid value for {name}: {raw!r}") from None


def parse_overrides(pairs):
    """Turn key=value strings (or a mapping) into typed PipelineConfig fields."""
    items = pairs.items() if isinstance(pairs, dict) else (_split_pair(pair) for pair in pairs)
    values = {}
    for key, raw in items:
        key = key.strip().lower()
        if key not in FIELDS:
            raise IngestError(f"unknown config key {key!r}")
        if raw is None:
            raise IngestError(f"config key {key!r} has no value")
        values[key] = _parse(key, str(raw))
    return values


def _split_pair(pair):
    key, sep, value = pair.partition('=')
    if not sep:
        raise IngestError(f"expected key=value, got {pair!r}")
    return key, value


def load_config(path=None, overrides=(), defaults=()):
    """Defaults, then the key=value file, then command-line overrides."""
    values = parse_overrides(defaults)
    if path:
        path = Path(path)
        if not path.is_file():
            raise IngestError(f"config file {path} not found")
        from_file = parse_overrides(dotenv_values(path))
        values.update(from_file)
        logger.debug(f"loaded {len(from_file)} settings from {path}")
    values.update(parse_overrides(overrides))
    return PipelineConfig(**values)
