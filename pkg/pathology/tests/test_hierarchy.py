from collections import Counter
from types import SimpleNamespace

import numpy as np
from django.test import SimpleTestCase

from pathology.Augmentation.augment import Strategy
from pathology.exceptions import ExperimentError, PipelineError
from pathology.Hierarchy.experiments import (STAGE1_POOL, STAGE2_POOL, Experiment, augmentation_pools,
                                             classifier_names, evaluate_experiment, split, training_sets)
from pathology.Hierarchy.hierarchy import HierarchicalModel, route, stack_inputs
from pathology.Hierarchy.labels import (DISEASES, FINAL_LABELS, FinalLabel, GenderHealthLabel, disease_index,
                                        final_index, stage1_index, stage1_label, stage2_names)
from pathology.Ingest.config import PipelineConfig
from pathology.tests.helpers import example, noise_clip


class ReadingModel:
    """Stub classifier whose prediction is stored in the input at a fixed column."""

    def __init__(self, num_classes, column):
        self.num_classes = num_classes
        self.column = column

    def forward(self, x, taps=False):
        picks = np.rint(x[:, 0, 0, self.column] * 10).astype(int)
        logits = np.full((len(x), self.num_classes), -5.0)
        logits[np.arange(len(x)), picks] = 5.0
        return logits, {}


def encoded(gender, label, stage1=None, disease=None, recording_id='r', pool=''):
    """Spectrogram whose scaled corner holds the stage-1 and stage-2 answers."""
    power = np.zeros((4, 4))
    power[0, 0] = stage1_index(gender, label) if stage1 is None else stage1
    power[0, 1] = (disease_index(label) if label != 'HC' else 0) if disease is None else disease
    power[0, 2] = 10.0
    return example(power, recording_id=recording_id, gender=gender, label=label, pool=pool)


def oracle():
    return {'pd': ReadingModel(4, 0), 'mp': ReadingModel(6, 1), 'fp': ReadingModel(6, 1)}


class LabelTests(SimpleTestCase):
    def test_stage1_mapping(self):
        self.assertEqual(stage1_label('M', 'HC'), GenderHealthLabel.HC_M)
        self.assertEqual(stage1_label('f', 'D3'), GenderHealthLabel.P_F)
        with self.assertRaisesMessage(ExperimentError, 'missing gender'):
            stage1_label('', 'D1')

    def test_indices(self):
        self.assertEqual(final_index('HC'), 0)
        self.assertEqual(disease_index('D6'), 5)
        self.assertEqual(stage2_names('M')[0], 'D1M')
        with self.assertRaises(ExperimentError):
            disease_index('HC')
        with self.assertRaises(ExperimentError):
            final_index('D7')


class RoutingTests(SimpleTestCase):
    def test_route(self):
        self.assertEqual(route(0, 3, 4), final_index('HC'))
        self.assertEqual(route(1, 3, 4), final_index('HC'))
        self.assertEqual(route(2, 3, 4), final_index('D4'))
        self.assertEqual(route(3, 3, 4), final_index('D5'))

    def test_healthy_stage1_ends_the_route(self):
        model = HierarchicalModel(**oracle())
        spec = encoded('M', 'D2', stage1=0).spectrogram
        self.assertEqual(model.predict(spec), FinalLabel.HC)

    def test_routing_follows_predicted_gender(self):
        model = HierarchicalModel(pd=ReadingModel(4, 0), mp=ReadingModel(6, 1), fp=ReadingModel(6, 3))
        # a male recording the first stage calls female goes to the female classifier
        power = np.zeros((4, 4))
        power[0, 0], power[0, 1], power[0, 3], power[0, 2] = 3, 1, 4, 10
        spec = example(power, gender='M', label='D2').spectrogram
        self.assertEqual(model.predict(spec), DISEASES[4])

    def test_stack_inputs(self):
        batch = stack_inputs([encoded('M', 'HC'), encoded('F', 'D1')])
        self.assertEqual(batch.shape, (2, 1, 4, 4))
        self.assertEqual(batch.dtype, np.float32)
        self.assertLessEqual(batch.max(), 1.0)


class EvaluateTests(SimpleTestCase):
    def test_perfect_hierarchy(self):
        test_set = [encoded(gender, label.value, recording_id=f"{label.value}{gender}")
                    for label in FINAL_LABELS for gender in 'MF']
        report = evaluate_experiment('Exp2', oracle(), test_set)
        self.assertEqual(report['metrics']['accuracy'], 1.0)
        self.assertAlmostEqual(report['metrics']['mcc'], 1.0)
        self.assertEqual(report['stage1']['accuracy'], 1.0)
        self.assertEqual(report['healthy_detection_accuracy'], 1.0)
        self.assertEqual(report['test_counts'], {label.value: 2 for label in FINAL_LABELS})
        self.assertEqual(list(report['per_class_accuracy']), [label.value for label in FINAL_LABELS])

    def test_missing_classifier(self):
        with self.assertRaisesMessage(ExperimentError, 'missing trained classifiers: fp'):
            evaluate_experiment('Exp2', {'pd': None, 'mp': None}, [encoded('M', 'HC')])

    def test_baseline(self):
        report = evaluate_experiment('Exp1', {'baseline': ReadingModel(7, 0)}, [encoded('M', 'HC')])
        self.assertNotIn('stage1', report)
        self.assertEqual(classifier_names('Exp1'), ('baseline',))


def items(counts):
    """Namespaced recordings with two segments each."""
    dataset = []
    for (gender, label), n in counts.items():
        for i in range(n):
            recording_id = f"{label}_{gender}_{i:03d}"
            for s in range(2):
                dataset.append(SimpleNamespace(recording_id=recording_id, key=f"{recording_id}__s{s:03d}",
                                               gender=gender, label=label))
    return dataset


class SplitTests(SimpleTestCase):
    def test_single_class_ratio(self):
        train, test = split(items({('M', 'HC'): 100}), ratio=0.8, seed=1)
        self.assertEqual(len({i.recording_id for i in train}), 80)
        self.assertEqual(len({i.recording_id for i in test}), 20)

    def test_recordings_stay_together(self):
        train, test = split(items({('M', 'HC'): 20, ('F', 'D1'): 15, ('M', 'D2'): 12}), seed=3)
        self.assertFalse({i.recording_id for i in train} & {i.recording_id for i in test})

    def test_stratified_per_class(self):
        counts = {('M', 'HC'): 40, ('F', 'HC'): 30, ('M', 'D1'): 20, ('F', 'D6'): 10}
        train, _ = split(items(counts), seed=5)
        recordings = {(i.gender, i.label, i.recording_id) for i in train}
        per_class = Counter((gender, label) for gender, label, _ in recordings)
        for stratum, total in counts.items():
            self.assertLessEqual(abs(per_class[stratum] - 0.8 * total), 1)

    def test_same_seed_same_split(self):
        dataset = items({('M', 'HC'): 20, ('F', 'D1'): 20})
        self.assertEqual([i.key for i in split(dataset, seed=9)[0]], [i.key for i in split(dataset, seed=9)[0]])

    def test_segment_unit(self):
        train, test = split(items({('M', 'HC'): 10}), unit='segment', seed=1)
        self.assertEqual((len(train), len(test)), (16, 4))

    def test_class_too_small(self):
        with self.assertRaisesMessage(ExperimentError, 'class too small to stratify: F/D4'):
            split(items({('M', 'HC'): 10, ('F', 'D4'): 1}))


class TrainingSetTests(SimpleTestCase):
    def setUp(self):
        self.train = [encoded(g, label, recording_id=f"{label}{g}{i}")
                      for g in 'MF' for label in ('HC', 'D1', 'D2') for i in range(2)]
        self.augmented = [encoded('M', 'D1', recording_id='aug1', pool=STAGE1_POOL),
                          encoded('F', 'D2', recording_id='aug2', pool=STAGE2_POOL)]

    def test_stage2_never_sees_healthy(self):
        sets = training_sets('Exp2', self.train)
        for name in ('mp', 'fp'):
            examples, labels, names = sets[name]
            self.assertTrue(all(e.label != 'HC' for e in examples))
            self.assertEqual(len(names), 6)
        self.assertEqual(len(sets['pd'][0]), len(self.train))

    def test_augmented_pools_feed_their_stage(self):
        sets = training_sets(Experiment.EXP3_2, self.train, self.augmented)
        self.assertIn(self.augmented[0], sets['pd'][0])
        self.assertNotIn(self.augmented[1], sets['pd'][0])
        self.assertIn(self.augmented[1], sets['fp'][0])

    def test_exp2_ignores_augmentation(self):
        sets = training_sets('Exp2', self.train, self.augmented)
        self.assertNotIn(self.augmented[0], sets['pd'][0])

    def test_exp3_needs_augmentation(self):
        with self.assertRaisesMessage(ExperimentError, 'run the augment stage first'):
            training_sets('Exp3.1', self.train)

    def test_baseline_has_seven_classes(self):
        _, labels, names = training_sets('Exp1', self.train)['baseline']
        self.assertEqual(len(names), 7)
        self.assertEqual(len(labels), len(self.train))


def pool_clips(counts):
    return [noise_clip(duration=1.2, seed=n * 10 + i, recording_id=f"{label}_{gender}_{i}", gender=gender, label=label)
            for n, ((gender, label), count) in enumerate(counts.items()) for i in range(count)]


class AugmentationPoolTests(SimpleTestCase):
    def setUp(self):
        # one male D6 short of the other diseases, so one clip per stage is synthesized
        self.counts = {('M', 'HC'): 12, ('F', 'HC'): 12}
        for disease in DISEASES:
            self.counts[('M', disease.value)] = 1 if disease.value == 'D6' else 2
            self.counts[('F', disease.value)] = 2

    def test_pools_balance_both_stages(self):
        pools = augmentation_pools(pool_clips(self.counts), Strategy.TIMEWARP, PipelineConfig())

        self.assertEqual(len(pools[STAGE1_POOL]), 1)
        self.assertEqual(pools[STAGE1_POOL][0].gender, 'M')
        self.assertEqual(len(pools[STAGE2_POOL]), 1)
        self.assertEqual((pools[STAGE2_POOL][0].gender, pools[STAGE2_POOL][0].label), ('M', 'D6'))
        synthesized = pools[STAGE1_POOL] + pools[STAGE2_POOL]
        self.assertTrue(all(clip.augmented for clip in synthesized))
        self.assertEqual(len({clip.key for clip in synthesized}), 2)

    def test_originals_are_left_untouched(self):
        clips = pool_clips(self.counts)
        before = [(clip.key, clip.samples.copy()) for clip in clips]
        augmentation_pools(clips, Strategy.TIMEWARP, PipelineConfig())
        for clip, (key, samples) in zip(clips, before):
            self.assertEqual(clip.key, key)
            self.assertFalse(clip.augmented)
            np.testing.assert_array_equal(clip.samples, samples)

    def test_disease_missing_for_one_gender(self):
        del self.counts[('F', 'D2')]
        with self.assertRaisesMessage(PipelineError, 'cannot augment empty class D2'):
            augmentation_pools(pool_clips(self.counts), Strategy.TIMEWARP, PipelineConfig())

    def test_gender_without_pathological_clips(self):
        counts = {key: n for key, n in self.counts.items() if key[0] == 'M' or key[1] == 'HC'}
        with self.assertRaises(PipelineError):
            augmentation_pools(pool_clips(counts), Strategy.TIMEWARP, PipelineConfig())

    def test_empty_input(self):
        with self.assertRaises(ExperimentError):
            augmentation_pools([], Strategy.RESAMPLE, PipelineConfig())
