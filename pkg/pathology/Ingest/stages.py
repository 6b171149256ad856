"""
Pipeline stages.

Every stage reads the artifacts of earlier stages from the cache directory,
builds its own output directory atomically and stamps it with a digest of
its inputs and of the config fields it depends on. A stage whose stamp is
current is skipped unless forced.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import pandas as pd
from logzero import logger

from pathology.Analysis.similarity import cka_profile, format_cka_series, select_probes
from pathology.Analysis.statistics import format_power_table, gender_power_report, mean_spectrograms
from pathology.Augmentation.augment import Strategy
from pathology.exceptions import AudioError, IngestError
from pathology.Features.features import LabeledExample, flag_outliers, mean_power_db, mel_spectrogram
from pathology.Features.melcache import read_mel, write_mel
from pathology.Hierarchy.experiments import (Experiment, augmentation_pools, class_counts, classifier_names,
                                             evaluate_experiment, experiment_strategy, fit_experiment, split,
                                             training_sets, train_config)
from pathology.Hierarchy.hierarchy import stack_inputs
from pathology.Ingest.artifacts import (atomic_write_text, inputs_digest, is_up_to_date, read_json,
                                        stage_directory, write_json)
from pathology.Ingest.manifest import Manifest, ManifestEntry, load_manifest, save_manifest
from pathology.Ingest.reports import format_experiment, ordered, per_class_table, results_table
from pathology.Ingest.synth import synth_dataset
from pathology.Ingest.wav import decode_wav, write_wav
from pathology.Network.checkpoint import load_checkpoint, save_checkpoint
from pathology.Preprocessing.audio_core import ClipMeta, preprocess_recording, segment

SPLIT_FIELDS = ('seed', 'split_unit', 'split_ratio')
FEATURE_FIELDS = ('segment_window_s', 'segment_hop_s', 'n_mels', 'n_frames', 'mel_fmax')
STAGE_FIELDS = {
    'synth': ('seed', 'synth_counts', 'synth_duration_s', 'synth_rates', 'synth_silence_fraction'),
    'preprocess': ('manifest', 'frame_window', 'frame_hop', 'silence_threshold', 'crossfade', 'segment_window_s'),
    'flag-outliers': FEATURE_FIELDS + ('outlier_floor_db', 'outlier_spike_db', 'outlier_flatness'),
    'featurize': FEATURE_FIELDS,
    'augment': SPLIT_FIELDS + FEATURE_FIELDS + ('augmentation', 'rate_low', 'rate_high', 'rate_step',
                                                'warp_pieces', 'warp_crossfade'),
    'train': SPLIT_FIELDS + ('experiment', 'learning_rates', 'batch_sizes', 'epochs', 'folds', 'widths',
                             'activation'),
    'evaluate': SPLIT_FIELDS + ('experiment',),
    'analyze': SPLIT_FIELDS + ('experiment', 'cka_probe_cap'),
    'report': ('cache_dir',),
}
RECORDING_COLUMNS = ['recording_id', 'dataset', 'gender', 'label', 'sample_rate', 'duration_s', 'trimmed']
SEGMENT_COLUMNS = ['key', 'recording_id', 'dataset', 'gender', 'label', 'segment_index', 'source_rate',
                   'mean_power_db', 'augmented', 'pool']


class CachePaths:
    def __init__(self, root):
        self.root = Path(root)
        self.synth = self.root / 'synth'
        self.preprocessed = self.root / 'preprocessed'
        self.outliers = self.root / 'outliers'
        self.features = self.root / 'features'
        self.reports_root = self.root / 'reports'
        self.analysis = self.root / 'analysis'
        self.report = self.root / 'report'

    def augmented(self, strategy):
        return self.root / 'augmented' / Strategy(strategy).value

    def models(self, experiment):
        return self.root / 'models' / Experiment(experiment).value

    def reports(self, experiment):
        return self.reports_root / Experiment(experiment).value


def _run(name, directory, config, inputs, build, force=False):
    for path in inputs:
        if not Path(path).exists():
            raise IngestError(f"{name}: missing input {path}; run the earlier stages first")
    digest = inputs_digest(f"{name}:{config.digest(*STAGE_FIELDS[name])}", inputs)
    if not force and is_up_to_date(directory, digest):
        logger.info(f"{name}: {directory} is up to date")
        return directory
    logger.info(f"{name}: building {directory}")
    with stage_directory(directory, digest) as scratch:
        build(scratch)
    logger.info(f"{name}: done")
    return directory


def _map(function, items, workers):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(function, items))
    return [function(item) for item in items]


def _write_csv(path, rows, columns):
    atomic_write_text(path, pd.DataFrame(rows, columns=columns).to_csv(index=False, lineterminator='\n'))


def _read_csv(path):
    return pd.read_csv(path, dtype=str, keep_default_na=False)


def manifest_path(config):
    return Path(config.manifest) if config.manifest else CachePaths(config.cache_path).synth / 'manifest.csv'


def load_recordings(paths):
    """Preprocessed recordings as AudioClips, in recordings.csv order."""
    frame = _read_csv(paths.preprocessed / 'recordings.csv')
    return [
        decode_wav(paths.preprocessed / 'wav' / f"{row['recording_id']}.wav", row['recording_id'],
                   ClipMeta(gender=row['gender'], label=row['label'], dataset=row['dataset']))
        for row in frame.to_dict('records')
    ]


def load_examples(directory):
    """LabeledExamples from a segments.csv + mel/ directory."""
    directory = Path(directory)
    frame = _read_csv(directory / 'segments.csv')
    examples = []
    for row in frame.to_dict('records'):
        meta = ClipMeta(gender=row['gender'], label=row['label'], dataset=row['dataset'])
        spec = read_mel(directory / 'mel' / f"{row['key']}.mel", recording_id=row['recording_id'], meta=meta)
        examples.append(LabeledExample(spectrogram=spec, gender=row['gender'], label=row['label'],
                                       augmented=row['augmented'] == 'true', pool=row['pool']))
    return examples


def featurize_clips(clips, out, config, pool=''):
    """Mel spectrogram per clip into out/mel; returns segments.csv rows."""
    def work(clip):
        spec = mel_spectrogram(clip, config.n_mels, config.n_frames, config.mel_fmax)
        write_mel(out / 'mel' / f"{clip.key}.mel", spec)
        return {
            'key': clip.key, 'recording_id': clip.recording_id, 'dataset': clip.meta.dataset,
            'gender': clip.gender, 'label': clip.label, 'segment_index': clip.segment_index,
            'source_rate': clip.sample_rate, 'mean_power_db': f"{mean_power_db(spec):.6f}",
            'augmented': 'true' if clip.augmented else 'false', 'pool': pool,
        }
    return _map(work, clips, config.workers)


def _segments(clips, config):
    return [piece for clip in clips for piece in segment(clip, config.segment_window_s, config.segment_hop_s)]


def run_synth(config, force=False):
    paths = CachePaths(config.cache_path)

    def build(out):
        entries = []
        for clip in synth_dataset(config):
            relative = f"wav/{clip.recording_id}.wav"
            write_wav(out / relative, clip)
            entries.append(ManifestEntry(path=relative, dataset='synthetic', gender=clip.gender, label=clip.label,
                                         recording_id=clip.recording_id))
        save_manifest(Manifest(entries=entries, root=out), out / 'manifest.csv')

    return _run('synth', paths.synth, config, [], build, force)


def run_preprocess(config, force=False):
    paths = CachePaths(config.cache_path)
    source = manifest_path(config)
    if not source.is_file():
        raise IngestError(f"no manifest at {source}; run synth or set manifest=<path>")
    manifest = load_manifest(source)
    entries = manifest.active
    if not entries:
        raise IngestError(f"manifest {source} has no active recordings")

    def build(out):
        def work(entry):
            meta = ClipMeta(gender=entry.gender, label=entry.label, dataset=entry.dataset)
            try:
                clip = decode_wav(manifest.resolve(entry), entry.recording_id, meta)
                clean, trimmed = preprocess_recording(clip, config.frame_spec, config.silence_threshold,
                                                      config.crossfade, config.segment_window_s)
            except (AudioError, IngestError) as exc:
                logger.warning(f"excluding {entry.recording_id}: {exc}")
                return entry, None, False, str(exc)
            write_wav(out / 'wav' / f"{entry.recording_id}.wav", clean)
            return entry, clean, trimmed, ''

        results = _map(work, entries, config.workers)
        kept = [(entry, clip, trimmed) for entry, clip, trimmed, _ in results if clip is not None]
        if not kept:
            raise IngestError("every recording was dropped during preprocessing")
        _write_csv(out / 'recordings.csv', [
            {'recording_id': entry.recording_id, 'dataset': entry.dataset, 'gender': entry.gender,
             'label': entry.label, 'sample_rate': clip.sample_rate, 'duration_s': f"{clip.duration:.6f}",
             'trimmed': 'true' if trimmed else 'false'}
            for entry, clip, trimmed in kept
        ], RECORDING_COLUMNS)

        subgroups = {}
        for entry, _, trimmed in kept:
            group = f"{'HC' if entry.label == 'HC' else 'P'}_{entry.gender}"
            total, removed = subgroups.get(group, (0, 0))
            subgroups[group] = (total + 1, removed + int(trimmed))
        trimmed_per_dataset = {}
        for entry, _, trimmed in kept:
            trimmed_per_dataset[entry.dataset] = trimmed_per_dataset.get(entry.dataset, 0) + int(trimmed)
        write_json(out / 'summary.json', {
            'recordings': len(entries),
            'kept': len(kept),
            'dropped': [{'recording_id': entry.recording_id, 'reason': reason}
                        for entry, clip, _, reason in results if clip is None],
            'trimmed_per_dataset': trimmed_per_dataset,
            'silence_removal_rate': {group: removed / total for group, (total, removed) in sorted(subgroups.items())},
        })

    inputs = [source] + [manifest.resolve(entry) for entry in entries]
    return _run('preprocess', paths.preprocessed, config, inputs, build, force)


def run_flag_outliers(config, force=False):
    paths = CachePaths(config.cache_path)
    source = manifest_path(config)

    def build(out):
        specs = [mel_spectrogram(piece, config.n_mels, config.n_frames, config.mel_fmax)
                 for piece in _segments(load_recordings(paths), config)]
        flagged = flag_outliers(specs, config.outlier_thresholds)
        _write_csv(out / 'outliers.csv', [{'recording_id': rid, 'reasons': '; '.join(reasons)}
                                          for rid, reasons in flagged], ['recording_id', 'reasons'])
        manifest = load_manifest(source)
        suggested = manifest.excluding({rid: '; '.join(reasons) for rid, reasons in flagged})
        save_manifest(suggested.rebased(paths.outliers), out / 'manifest.suggested.csv')
        logger.info(f"flagged {len(flagged)} recordings; review {paths.outliers / 'manifest.suggested.csv'}")

    return _run('flag-outliers', paths.outliers, config, [source, paths.preprocessed], build, force)


def run_featurize(config, force=False):
    paths = CachePaths(config.cache_path)

    def build(out):
        rows = featurize_clips(_segments(load_recordings(paths), config), out, config)
        _write_csv(out / 'segments.csv', rows, SEGMENT_COLUMNS)
        logger.info(f"featurized {len(rows)} segments")

    return _run('featurize', paths.features, config, [paths.preprocessed], build, force)


def run_augment(config, force=False):
    paths = CachePaths(config.cache_path)
    strategy = Strategy(config.augmentation)

    def build(out):
        recordings = load_recordings(paths)
        units = recordings if config.split_unit == 'recording' else _segments(recordings, config)
        train, _ = split(units, config.split_ratio, config.seed, config.split_unit)
        rows = []
        for pool, clips in augmentation_pools(train, strategy, config).items():
            rows.extend(featurize_clips(clips, out, config, pool=pool))
        _write_csv(out / 'segments.csv', rows, SEGMENT_COLUMNS)

    return _run('augment', paths.augmented(strategy), config, [paths.preprocessed], build, force)


def _split_examples(paths, config):
    return split(load_examples(paths.features), config.split_ratio, config.seed, config.split_unit)


def run_train(config, force=False):
    paths = CachePaths(config.cache_path)
    experiment = Experiment(config.experiment)
    strategy = experiment_strategy(experiment)
    inputs = [paths.features] + ([paths.augmented(strategy)] if strategy else [])
    if strategy and not paths.augmented(strategy).exists():
        raise IngestError(f"{experiment.value} needs `augment` with augmentation={strategy.value} first")

    def build(out):
        train, _ = _split_examples(paths, config)
        augmented = load_examples(paths.augmented(strategy)) if strategy else []
        sets = training_sets(experiment, train, augmented)
        results = fit_experiment(experiment, train, config, augmented)
        summary = {'experiment': experiment.value, 'classifiers': {}}
        for offset, (name, result) in enumerate(results.items()):
            _, labels, names = sets[name]
            save_checkpoint(out / f"{name}.ckpt", result.model, config={
                'classifier': name, 'experiment': experiment.value, 'class_names': names,
                'hyperparameters': result.hyperparameters(),
                'train_config': train_config(config, offset).to_dict(),
            })
            summary['classifiers'][name] = {
                'class_names': names,
                'hyperparameters': result.hyperparameters(),
                'train_counts': class_counts(labels, names),
                'grid': [score.to_dict() for score in result.grid],
                'history': result.history,
            }
        write_json(out / 'training.json', summary)

    return _run('train', paths.models(experiment), config, inputs, build, force)


def run_evaluate(config, force=False):
    paths = CachePaths(config.cache_path)
    experiment = Experiment(config.experiment)
    models_dir = paths.models(experiment)
    if not (models_dir / 'training.json').is_file():
        raise IngestError(f"no trained model for {experiment.value}; run `train --exp {experiment.value}` first")

    def build(out):
        _, test = _split_examples(paths, config)
        training = read_json(models_dir / 'training.json')['classifiers']
        trained = {name: load_checkpoint(models_dir / f"{name}.ckpt")[0] for name in classifier_names(experiment)}
        report = evaluate_experiment(
            experiment, trained, test,
            hyperparameters={name: info['hyperparameters'] for name, info in training.items()},
            train_counts={name: info['train_counts'] for name, info in training.items()},
        )
        report.update({'seed': config.seed, 'split_unit': config.split_unit,
                       'dataset_digest': inputs_digest('', [paths.features])})
        write_json(out / 'report.json', report)
        atomic_write_text(out / 'report.txt', format_experiment(report))

    return _run('evaluate', paths.reports(experiment), config, [paths.features, models_dir], build, force)


def run_analyze(config, force=False):
    paths = CachePaths(config.cache_path)
    experiment = Experiment(config.experiment)
    if experiment == Experiment.EXP1:
        raise IngestError("analysis compares the male and female disease classifiers; choose a two-stage experiment")
    models_dir = paths.models(experiment)
    if not (models_dir / 'training.json').is_file():
        raise IngestError(f"no trained model for {experiment.value}; run `train --exp {experiment.value}` first")

    def build(out):
        examples = load_examples(paths.features)
        _, test = split(examples, config.split_ratio, config.seed, config.split_unit)
        probes = select_probes(test, config.cka_probe_cap, config.seed)
        mp, _ = load_checkpoint(models_dir / 'mp.ckpt')
        fp, _ = load_checkpoint(models_dir / 'fp.ckpt')
        profile = cka_profile(mp, fp, stack_inputs(probes))

        frame = _read_csv(paths.features / 'segments.csv')
        frame['mean_power_db'] = frame['mean_power_db'].astype(float)
        power = gender_power_report(frame[['recording_id', 'gender', 'label', 'mean_power_db']])

        means = mean_spectrograms(examples)
        for key, spec in means.items():
            write_mel(out / 'mean' / f"{key}.mel", spec)

        write_json(out / 'analysis.json', {
            'experiment': experiment.value,
            'probes': len(probes),
            'cka': [{'layer': tap, 'cka': score} for tap, score in profile],
            'power': [row.to_dict() for row in power],
            'mean_spectrograms': sorted(means),
        })
        atomic_write_text(out / 'analysis.txt', '\n'.join([
            'Mean Mel power by gender', format_power_table(power), '',
            f"CKA between MP and FP ({len(probes)} probes)", format_cka_series(profile), '',
        ]))

    return _run('analyze', paths.analysis, config, [paths.features, models_dir], build, force)


def run_report(config, force=False):
    paths = CachePaths(config.cache_path)
    report_files = sorted(paths.reports_root.glob('*/report.json'))
    if not report_files:
        raise IngestError("no experiment reports found; run `evaluate` first")
    inputs = [paths.reports_root] + ([paths.analysis] if paths.analysis.exists() else [])

    def build(out):
        reports = ordered([read_json(path) for path in report_files])
        summary = {'experiments': {r['experiment']: {
            'metrics': r['metrics'],
            'per_class_accuracy': r['per_class_accuracy'],
            'healthy_detection_accuracy': r['healthy_detection_accuracy'],
            'hyperparameters': r.get('hyperparameters', {}),
        } for r in reports}}
        sections = ['Experiment results', results_table(reports).to_string(index=False), '',
                    'Per-class accuracy (%)', per_class_table(reports).to_string(), '']
        if paths.analysis.exists():
            analysis = read_json(paths.analysis / 'analysis.json')
            summary['analysis'] = analysis
            sections.append((paths.analysis / 'analysis.txt').read_text(encoding='utf-8'))
        write_json(out / 'report.json', summary)
        atomic_write_text(out / 'report.txt', '\n'.join(sections))

    return _run('report', paths.report, config, inputs, build, force)


STAGES = {
    'synth': run_synth,
    'preprocess': run_preprocess,
    'flag-outliers': run_flag_outliers,
    'featurize': run_featurize,
    'augment': run_augment,
    'train': run_train,
    'evaluate': run_evaluate,
    'analyze': run_analyze,
    'report': run_report,
}


def run_stage(name, config, force=False):
    if name not in STAGES:
        raise IngestError(f"unknown stage {name!r}, expected one of {', '.join(STAGES)}")
    return STAGES[name](config, force=force)
