"""
Dataset manifests.

A manifest is a CSV with one row per recording:

    path,dataset,gender,label,recording_id,excluded,reason

Paths are resolved relative to the manifest's directory. Excluded rows stay
in the manifest (so outlier decisions round-trip) but are skipped by every
stage.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass
from pathlib import Path

import pandas as pd
from django.db import models
from logzero import logger

from pathology.exceptions import ExperimentError, IngestError
from pathology.Hierarchy.labels import FINAL_LABELS, Gender, parse_gender, parse_label
from pathology.Ingest.artifacts import atomic_write_text

COLUMNS = ['path', 'dataset', 'gender', 'label', 'recording_id', 'excluded', 'reason']
TRUE_VALUES = ('1', 'true', 'yes', 'y')
FALSE_VALUES = ('', '0', 'false', 'no', 'n')


class Dataset(models.TextChoices):
    COSWARA = 'coswara', 'Coswara'
    SVD = 'svd', 'Saarbruecken Voice Database'
    ALS = 'als', 'ALS voice corpus'
    PCGITA = 'pcgita', 'PC-GITA'
    SYNTHETIC = 'synthetic', 'Synthetic'


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    dataset: str
    gender: str
    label: str
    recording_id: str
    excluded: bool = False
    reason: str = ''


@dataclass
class Manifest:
    entries: list
    root: Path = Path('.')

    def __len__(self):
        return len(self.entries)

    @property
    def active(self):
        return [entry for entry in self.entries if not entry.excluded]

    def resolve(self, entry):
        path = Path(entry.path)
        return path if path.is_absolute() else self.root / path

    def counts(self):
        """Active recordings per label and gender, with totals."""
        frame = pd.DataFrame([asdict(entry) for entry in self.active], columns=COLUMNS)
        table = pd.crosstab(
            pd.Categorical(frame['label'], categories=[label.value for label in FINAL_LABELS]),
            pd.Categorical(frame['gender'], categories=[gender.value for gender in Gender]),
            dropna=False,
        )
        table.index.name, table.columns.name = 'label', 'gender'
        table['total'] = table.sum(axis=1)
        return table

    def excluding(self, flagged):
        """Copy with the given {recording_id: reason} rows marked excluded."""
        entries = [
            ManifestEntry(**{**asdict(entry), 'excluded': True, 'reason': flagged[entry.recording_id]})
            if entry.recording_id in flagged else entry
            for entry in self.entries
        ]
        return Manifest(entries=entries, root=self.root)

    def rebased(self, root):
        """Copy whose relative paths resolve to the same files from `root`."""
        root = Path(root)
        entries = [
            entry if Path(entry.path).is_absolute()
            else ManifestEntry(**{**asdict(entry), 'path': Path(os.path.relpath(self.resolve(entry), root)).as_posix()})
            for entry in self.entries
        ]
        return Manifest(entries=entries, root=root)


def _parse_row(number, row):
    try:
        dataset = Dataset(row['dataset'].strip().lower())
    except ValueError:
        raise IngestError(f"row {number}: unknown dataset {row['dataset']!r}") from None
    try:
        gender = parse_gender(row['gender']) if row['gender'].strip() else None
        label = parse_label(row['label'])
    except ExperimentError as exc:
        raise IngestError(f"row {number}: {exc}") from None
    if gender is None:
        raise IngestError(f"row {number}: missing gender")
    excluded = row['excluded'].strip().lower()
    if excluded not in TRUE_VALUES + FALSE_VALUES:
        raise IngestError(f"row {number}: excluded must be true or false, got {row['excluded']!r}")
    if not row['path'].strip() or not row['recording_id'].strip():
        raise IngestError(f"row {number}: path and recording_id are required")
    return ManifestEntry(path=row['path'].strip(), dataset=dataset.value, gender=gender.value, label=label.value,
                         recording_id=row['recording_id'].strip(), excluded=excluded in TRUE_VALUES,
                         reason=row['reason'].strip())


def load_manifest(path):
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"manifest {path} not found")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise IngestError(f"manifest {path} is empty") from None
    missing = [column for column in COLUMNS if column not in frame.columns]
    if missing:
        raise IngestError(f"manifest {path} lacks columns {missing}")
    if frame.empty:
        raise IngestError(f"manifest {path} has no rows")

    entries, seen = [], {}
    for offset, row in enumerate(frame[COLUMNS].to_dict('records')):
        number = offset + 2  # header is line 1
        entry = _parse_row(number, row)
        if entry.recording_id in seen:
            raise IngestError(f"row {number}: duplicate recording_id {entry.recording_id} (first on row {seen[entry.recording_id]})")
        seen[entry.recording_id] = number
        entries.append(entry)

    manifest = Manifest(entries=entries, root=path.parent)
    skipped = len(entries) - len(manifest.active)
    if skipped:
        logger.info(f"{path.name}: skipping {skipped} excluded recordings")
    logger.info(f"{path.name}: {len(manifest.active)} recordings\n{manifest.counts().to_string()}")
    return manifest


def save_manifest(manifest, path):
    frame = pd.DataFrame([asdict(entry) for entry in manifest.entries], columns=COLUMNS)
    frame['excluded'] = frame['excluded'].map(lambda value: 'true' if value else 'false')
    atomic_write_text(path, frame.to_csv(index=False, lineterminator='\n'))
