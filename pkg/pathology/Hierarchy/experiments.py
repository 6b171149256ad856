"""
Experiment harness.

    Exp1    one seven-class classifier, no augmentation
    Exp2    PD -> MP/FP hierarchy, no augmentation
    Exp3.1  hierarchy, training set balanced by multi-scale resampling
    Exp3.2  hierarchy, training set balanced by time warping

All four share one stratified train/test split. Augmentation only ever
touches training units; the test set is evaluated as is.
"""

from __future__ import annotations

from collections import Counter

import numpy as np
from django.db import models
from logzero import logger
from sklearn.model_selection import train_test_split

from pathology.Augmentation.augment import Strategy, balance
from pathology.exceptions import ExperimentError
from pathology.Hierarchy.hierarchy import BaselineModel, HierarchicalModel, stack_inputs
from pathology.Hierarchy.labels import (DISEASES, FINAL_LABELS, STAGE1_LABELS, Gender, disease_index,
                                        final_index, stage1_index, stage1_label, stage2_names)
from pathology.Metrics.metrics import ConfusionMatrix, per_class_accuracy, recall, summarize
from pathology.Network.training import TrainConfig, default_factory, train
from pathology.Preprocessing.audio_core import segment

STAGE1_POOL = 'stage1'
STAGE2_POOL = 'stage2'


class Experiment(models.TextChoices):
    EXP1 = 'Exp1', 'Single-stage baseline'
    EXP2 = 'Exp2', 'Two-stage hierarchy'
    EXP3_1 = 'Exp3.1', 'Two-stage hierarchy, resampling'
    EXP3_2 = 'Exp3.2', 'Two-stage hierarchy, time warping'


def experiment_strategy(experiment):
    return {Experiment.EXP3_1: Strategy.RESAMPLE, Experiment.EXP3_2: Strategy.TIMEWARP}.get(Experiment(experiment))


def classifier_names(experiment):
    return ('baseline',) if Experiment(experiment) == Experiment.EXP1 else ('pd', 'mp', 'fp')


def split(dataset, ratio=0.8, seed=42, unit='recording'):
    """Stratified (gender, label) split of recordings or segments; returns (train, test) in input order."""
    dataset = list(dataset)
    if unit not in ('recording', 'segment'):
        raise ExperimentError(f"unknown split unit {unit!r}")
    unit_of = (lambda item: item.recording_id) if unit == 'recording' else (lambda item: item.key)

    strata = {}
    for item in dataset:
        stratum = f"{item.gender}/{item.label}"
        if strata.setdefault(unit_of(item), stratum) != stratum:
            raise ExperimentError(f"{unit} {unit_of(item)} carries two labels")
    if not strata:
        raise ExperimentError("cannot split an empty dataset")

    units = sorted(strata)
    sizes = Counter(strata[u] for u in units)
    small = sorted(stratum for stratum, size in sizes.items() if size < 2)
    if small:
        raise ExperimentError(f"class too small to stratify: {', '.join(small)}")
    try:
        train_units, _ = train_test_split(units, train_size=ratio, random_state=seed,
                                          stratify=[strata[u] for u in units])
    except ValueError as exc:
        raise ExperimentError(f"cannot stratify {len(units)} {unit}s: {exc}") from exc

    train_units = set(train_units)
    train = [item for item in dataset if unit_of(item) in train_units]
    test = [item for item in dataset if unit_of(item) not in train_units]
    logger.info(f"split {len(units)} {unit}s: {len(train)} train / {len(test)} test items")
    return train, test


def augmentation_pools(train_clips, strategy, config):
    """Synthesized training clips for stage 1 and for each gender's stage-2 classifier.

    Resampling balances whole recordings and segments the results; time
    warping balances segments. Only the synthesized segments are returned.
    """
    strategy = Strategy(strategy)
    train_clips = list(train_clips)
    if not train_clips:
        raise ExperimentError("no training clips to augment")

    def units(clips):
        if strategy == Strategy.TIMEWARP:
            return [piece for clip in clips
                    for piece in ([clip] if clip.segment_index is not None else segment(
                        clip, config.segment_window_s, config.segment_hop_s))]
        return clips

    def synthesized(balanced):
        fresh = [clip for clip in balanced if clip.augmented]
        return [piece for clip in fresh
                for piece in ([clip] if clip.segment_index is not None else segment(
                    clip, config.segment_window_s, config.segment_hop_s))]

    options = dict(seed=config.seed, grid=config.rate_grid, warp_pieces=config.warp_pieces,
                   warp_crossfade=config.warp_crossfade)
    pools = {}
    stage1 = balance(units(train_clips), strategy, key=lambda c: stage1_label(c.gender, c.label).value,
                     classes=[label.value for label in STAGE1_LABELS], tag='p1', **options)
    pools[STAGE1_POOL] = synthesized(stage1)

    stage2 = []
    for gender in Gender:
        sick = [clip for clip in train_clips if clip.gender == gender and clip.label != 'HC']
        if not sick:
            raise ExperimentError(f"no pathological {gender.label.lower()} training clips to augment")
        stage2.extend(synthesized(balance(units(sick), strategy, key=lambda c: c.label,
                                          classes=[disease.value for disease in DISEASES], tag='p2', **options)))
    pools[STAGE2_POOL] = stage2
    logger.info(f"{strategy.value}: {len(pools[STAGE1_POOL])} stage-1 and {len(stage2)} stage-2 synthesized segments")
    return pools


def train_config(config, offset):
    return TrainConfig(learning_rates=config.learning_rates, batch_sizes=config.batch_sizes, epochs=config.epochs,
                       seed=config.seed + offset, folds=config.folds, workers=config.workers)


def _fit(examples, labels, num_classes, config, offset, name):
    if not examples:
        raise ExperimentError(f"classifier {name} has no training examples")
    X = stack_inputs(examples)
    y = np.asarray(labels, dtype=np.int64)
    logger.info(f"training {name}: {len(X)} examples, {num_classes} classes")
    factory = default_factory(num_classes, X.shape[1:], widths=config.widths, activation=config.activation)
    return train(X, y, num_classes, train_config(config, offset), model_factory=factory)


def training_sets(experiment, train_examples, augmented=()):
    """Per-classifier (examples, labels, class names) for an experiment."""
    experiment = Experiment(experiment)
    train_examples = list(train_examples)
    if experiment == Experiment.EXP1:
        return {'baseline': (train_examples, [final_index(e.label) for e in train_examples],
                             [label.value for label in FINAL_LABELS])}

    augmented = list(augmented)
    if experiment_strategy(experiment) and not augmented:
        raise ExperimentError(f"{experiment.value} needs augmented training data; run the augment stage first")
    if not experiment_strategy(experiment):
        augmented = []
    stage1 = train_examples + [e for e in augmented if e.pool == STAGE1_POOL]
    sets = {'pd': (stage1, [stage1_index(e.gender, e.label) for e in stage1],
                   [label.value for label in STAGE1_LABELS])}
    for name, gender in (('mp', Gender.MALE), ('fp', Gender.FEMALE)):
        # stage 2 never sees healthy examples
        pool = [e for e in train_examples + [a for a in augmented if a.pool == STAGE2_POOL]
                if e.gender == gender and e.label != 'HC']
        sets[name] = (pool, [disease_index(e.label) for e in pool], stage2_names(gender))
    return sets


def fit_experiment(experiment, train_examples, config, augmented=()):
    """Train every classifier of an experiment; returns {name: TrainResult}."""
    sets = training_sets(experiment, train_examples, augmented)
    results = {}
    for offset, (name, (examples, labels, names)) in enumerate(sets.items()):
        results[name] = _fit(examples, labels, len(names), config, offset, name)
    return results


def class_counts(labels, names):
    counts = Counter(labels)
    return {name: int(counts.get(i, 0)) for i, name in enumerate(names)}


def evaluate_experiment(experiment, models_, test_examples, hyperparameters=None, train_counts=None):
    """Score trained classifiers on the untouched test set; returns the report dict."""
    experiment = Experiment(experiment)
    test_examples = list(test_examples)
    if not test_examples:
        raise ExperimentError("empty test set")
    missing = [name for name in classifier_names(experiment) if name not in models_]
    if missing:
        raise ExperimentError(f"{experiment.value} is missing trained classifiers: {', '.join(missing)}")

    X = stack_inputs(test_examples)
    truth = np.array([final_index(e.label) for e in test_examples])
    names = [label.value for label in FINAL_LABELS]
    report = {'experiment': experiment.value}

    if experiment == Experiment.EXP1:
        predicted = BaselineModel(models_['baseline']).predict_indices(X)
    else:
        model = HierarchicalModel(models_['pd'], models_['mp'], models_['fp'])
        stage1_truth = [stage1_index(e.gender, e.label) for e in test_examples]
        stage1_cm = ConfusionMatrix.from_predictions(stage1_truth, model.stage1(X),
                                                     class_names=[label.value for label in STAGE1_LABELS])
        report['stage1'] = {**summarize(stage1_cm), 'confusion_matrix': stage1_cm.to_dict()}
        predicted = model.predict_indices(X)

    cm = ConfusionMatrix.from_predictions(truth, predicted, class_names=names)
    report.update({
        'metrics': summarize(cm),
        'per_class_accuracy': {label: per_class_accuracy(cm)[label] for label in names},
        'healthy_detection_accuracy': recall(cm, 'HC'),
        'confusion_matrix': cm.to_dict(),
        'test_counts': class_counts(truth, names),
        'hyperparameters': hyperparameters or {},
        'train_counts': train_counts or {},
    })
    logger.info(f"{experiment.value}: accuracy {report['metrics']['accuracy']:.4f}, "
                f"weighted F1 {report['metrics']['weighted_f1']:.4f}, MCC {report['metrics']['mcc']:.4f}")
    return report


def run_experiment(experiment, train_examples, test_examples, config, augmented=()):
    """Train and evaluate in one call; returns (report, {name: TrainResult})."""
    sets = training_sets(experiment, train_examples, augmented)
    results = fit_experiment(experiment, train_examples, config, augmented)
    report = evaluate_experiment(
        experiment,
        {name: result.model for name, result in results.items()},
        test_examples,
        hyperparameters={name: result.hyperparameters() for name, result in results.items()},
        train_counts={name: class_counts(labels, names) for name, (_, labels, names) in sets.items()},
    )
    report['seed'] = config.seed
    report['split_unit'] = config.split_unit
    return report, results
