import numpy as np
from django.test import SimpleTestCase

from pathology.exceptions import AudioError
from pathology.Preprocessing.audio_core import (AudioClip, FrameSpec, VoicedMask, crossfade_join, minmax_normalize,
                                                preprocess_recording, remove_silence, rms_frames, segment,
                                                voiced_mask)
from pathology.tests.helpers import tone


class FrameTests(SimpleTestCase):
    def test_frame_count_without_padding(self):
        clip = AudioClip(samples=np.ones(10000), sample_rate=50000, recording_id='x')
        self.assertEqual(len(rms_frames(clip)), 1 + (10000 - 2048) // 512)

    def test_rms_of_constant_signal(self):
        clip = AudioClip(samples=np.full(4096, 0.25), sample_rate=50000, recording_id='x')
        np.testing.assert_allclose(rms_frames(clip), 0.25)

    def test_short_clip_rejected(self):
        clip = AudioClip(samples=np.ones(100), sample_rate=50000, recording_id='short')
        with self.assertRaisesMessage(AudioError, 'too short'):
            rms_frames(clip)

    def test_invalid_frame_spec(self):
        with self.assertRaises(AudioError):
            FrameSpec(window=512, hop=1024)

    def test_samples_are_read_only(self):
        clip = tone()
        with self.assertRaises(ValueError):
            clip.samples[0] = 1.0


class CrossfadeTests(SimpleTestCase):
    def test_endpoints_and_length(self):
        tail, head = np.ones(10), np.zeros(10)
        joined = crossfade_join(tail, head, 4)
        self.assertEqual(len(joined), 16)
        self.assertEqual(joined[6], tail[-4])
        self.assertEqual(joined[9], head[3])
        np.testing.assert_allclose(joined[6:10], [1.0, 2 / 3, 1 / 3, 0.0])

    def test_constant_signal_stays_constant(self):
        joined = crossfade_join(np.full(50, 0.7), np.full(40, 0.7), 16)
        np.testing.assert_allclose(joined, 0.7)

    def test_crossfade_longer_than_segment(self):
        with self.assertRaisesMessage(AudioError, 'crossfade longer than segment'):
            crossfade_join(np.ones(3), np.ones(10), 4)

    def test_interval_must_be_at_least_two(self):
        with self.assertRaises(AudioError):
            crossfade_join(np.ones(10), np.ones(10), 1)


class SilenceRemovalTests(SimpleTestCase):
    def test_fully_voiced_clip_is_returned_unchanged(self):
        clip = tone()
        self.assertIs(remove_silence(clip), clip)

    def test_fully_silent_recording(self):
        clip = AudioClip(samples=np.zeros(50000), sample_rate=50000, recording_id='quiet')
        with self.assertRaisesMessage(AudioError, 'fully silent recording'):
            remove_silence(clip)

    def test_gap_is_removed(self):
        clip = tone(duration=1.5)
        samples = np.array(clip.samples)
        samples[30000:45000] = 0.0
        gapped = clip.with_samples(samples)
        mask = voiced_mask(gapped)
        self.assertFalse(mask.flags.all())

        cleaned = remove_silence(gapped)
        self.assertLess(len(cleaned), len(gapped) - 8000)
        self.assertGreater(len(cleaned), len(gapped) - 15000)
        self.assertEqual(cleaned.recording_id, gapped.recording_id)

    def test_ranges_merge_overlapping_frames(self):
        clip = tone()
        ranges = voiced_mask(clip).ranges(len(clip))
        self.assertEqual(ranges, [(0, len(clip))])

    def test_last_voiced_frame_runs_to_the_end(self):
        self.assertEqual(VoicedMask(flags=np.array([False, False, True])).ranges(3300), [(1024, 3300)])
        self.assertEqual(VoicedMask(flags=np.array([True, False, False])).ranges(3300), [(0, 2048)])

    def test_second_pass_changes_nothing(self):
        clip = tone(duration=1.5)
        samples = np.array(clip.samples)
        samples[30000:45000] = 0.0
        once = remove_silence(clip.with_samples(samples))
        twice = remove_silence(once)
        np.testing.assert_array_equal(twice.samples, once.samples)


class NormalizationTests(SimpleTestCase):
    def test_minmax(self):
        clip = AudioClip(samples=[-1.0, 0.0, 3.0], sample_rate=50000, recording_id='x')
        np.testing.assert_allclose(minmax_normalize(clip).samples, [0.0, 0.25, 1.0])

    def test_constant_clip(self):
        clip = AudioClip(samples=np.full(10, 0.5), sample_rate=50000, recording_id='flat')
        with self.assertRaisesMessage(AudioError, 'degenerate amplitude range'):
            minmax_normalize(clip)

    def test_preprocess_reports_trimming(self):
        clip = tone(duration=1.8)
        samples = np.array(clip.samples)
        samples[40000:55000] = 0.0
        cleaned, trimmed = preprocess_recording(clip.with_samples(samples))
        self.assertTrue(trimmed)
        self.assertAlmostEqual(cleaned.samples.min(), 0.0)
        self.assertAlmostEqual(cleaned.samples.max(), 1.0)

    def test_preprocess_drops_short_clips(self):
        with self.assertRaises(AudioError):
            preprocess_recording(tone(duration=0.8))


class SegmentTests(SimpleTestCase):
    def test_segment_count_and_length(self):
        pieces = segment(tone(duration=1.8))
        self.assertEqual(len(pieces), 3)
        self.assertTrue(all(len(piece) == 50000 for piece in pieces))
        self.assertEqual([piece.segment_index for piece in pieces], [0, 1, 2])
        self.assertEqual(pieces[1].key, 'tone__s001')

    def test_segment_start_positions(self):
        clip = AudioClip(samples=np.arange(90000, dtype=float), sample_rate=50000, recording_id='ramp')
        pieces = segment(clip)
        self.assertEqual([piece.samples[0] for piece in pieces], [0.0, 20000.0, 40000.0])

    def test_short_clip_yields_no_segments(self):
        self.assertEqual(segment(tone(duration=0.9)), [])
