"""
Spectrogram cache files.

Layout (little-endian):
    magic   4 bytes  b"MELS"
    version u16
    n_mels  u16
    n_frames u16
    rate    u32
    id      u16 length + UTF-8 bytes
    data    n_mels * n_frames float32, row-major
"""

import struct

import numpy as np

from pathology.exceptions import FeatureError
from pathology.Features.features import MelSpectrogram
from pathology.Ingest.artifacts import atomic_write_bytes

MAGIC = b'MELS'
VERSION = 1
_HEADER = struct.Struct('<4sHHHI')
_ID_LENGTH = struct.Struct('<H')


def encode_mel(spec):
    n_mels, n_frames = spec.shape
    name = spec.key.encode('utf-8')
    header = _HEADER.pack(MAGIC, VERSION, n_mels, n_frames, int(spec.source_rate))
    data = np.ascontiguousarray(spec.power, dtype='<f4').tobytes()
    return header + _ID_LENGTH.pack(len(name)) + name + data


def decode_mel(payload, recording_id=None, meta=None):
    if len(payload) < _HEADER.size + _ID_LENGTH.size:
        raise FeatureError("truncated spectrogram file")
    magic, version, n_mels, n_frames, rate = _HEADER.unpack_from(payload, 0)
    if magic != MAGIC:
        raise FeatureError(f"not a spectrogram file (magic {magic!r})")
    if version != VERSION:
        raise FeatureError(f"unsupported spectrogram file version {version}")
    offset = _HEADER.size
    (length,) = _ID_LENGTH.unpack_from(payload, offset)
    offset += _ID_LENGTH.size
    key = payload[offset:offset + length].decode('utf-8')
    offset += length
    expected = n_mels * n_frames * 4
    if len(payload) - offset != expected:
        raise FeatureError(f"spectrogram {key}: expected {expected} data bytes, found {len(payload) - offset}")
    power = np.frombuffer(payload, dtype='<f4', count=n_mels * n_frames, offset=offset).reshape(n_mels, n_frames)
    return MelSpectrogram(power=power.copy(), source_rate=rate, recording_id=recording_id or key, meta=meta, key=key)


def write_mel(path, spec):
    atomic_write_bytes(path, encode_mel(spec))


def read_mel(path, recording_id=None, meta=None):
    with open(path, 'rb') as handle:
        return decode_mel(handle.read(), recording_id=recording_id, meta=meta)
