import math
import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import logit

from detection.detector import (BasicDetector, DetectionReport, DetectorConfig, EnhancedDetector, ScoreDistribution,
                                StreamingDetector, detect_basic, detect_enhanced, fit_score_distribution, merge_flags,
                                prepare_block, run_stream, score_block)
from detection.mad import MadConfig, MadDetector
from gan.trainer import TrainedGan
from gen.feeder import EventKind, EventSpec, FeederConfig, build_corpus, generate_normal
from nn.network import build_discriminator, build_generator
from phasor.data import FeatureBlock, FeatureSet, PhasorStream, derive_feature_matrix, fit_normalizer
from util.errors import DataError
from util.randomization import rng_for

DIST = ScoreDistribution(0.5, 0.05)


def stream_slice(stream: PhasorStream, a: int, b: int) -> PhasorStream:
    return PhasorStream.from_arrays(stream.ts[a:b], stream.v_mag[a:b], stream.v_ang[a:b], stream.i_mag[a:b],
                                    stream.i_ang[a:b])


def make_gan(features: np.ndarray, feature_set: FeatureSet, score: float = None, seed: int = 0) -> TrainedGan:
    """A model over the feature set; with `score` given its discriminator outputs that constant"""
    d = build_discriminator(feature_set.width, (4,), rng_for(seed))
    if score is not None:
        d.head.w[:] = 0.0
        d.head.b[:] = math.log(score / (1.0 - score))
    g = build_generator(2, (4,), feature_set.width, rng_for(seed + 1))
    return TrainedGan(d, g, fit_normalizer(feature_set.project(features)), feature_set)


class ScoreDistributionTest(unittest.TestCase):
    """
    Unit tests for the Normal score model and its flag rule
    """

    def test_fit_examples(self):
        dist = fit_score_distribution([0.5, 0.5, 0.5])
        self.assertEqual((dist.mean, dist.std), (0.5, 1e-9))
        dist = fit_score_distribution([0.0, 1.0])
        self.assertEqual(dist.mean, 0.5)
        self.assertAlmostEqual(dist.std, 0.7071067811865476, places=15)

    def test_fit_large_sample(self):
        dist = fit_score_distribution(rng_for(3).normal(0.4, 0.02, 100_000))
        self.assertAlmostEqual(dist.mean, 0.4, delta=4 * 0.02 / math.sqrt(100_000))
        self.assertAlmostEqual(dist.std, 0.02, delta=2e-4)

    def test_fit_errors(self):
        for scores in ([], [0.5], [0.5, float('nan')]):
            with self.subTest(scores=scores):
                with self.assertRaises(DataError):
                    fit_score_distribution(scores)
        with self.assertRaises(DataError):
            ScoreDistribution(0.5, 0.0)

    def test_flag_examples(self):
        lo, hi = DIST.interval(3.0)
        self.assertAlmostEqual(hi, 0.65)
        self.assertEqual(DIST.flags([0.5, 0.70, 0.30, hi, lo], 3.0).tolist(), [False, True, True, True, True])
        self.assertFalse(DIST.flags(np.nextafter(hi, 0.0), 3.0))

    def test_nominal_flag_rate(self):
        self.assertAlmostEqual(ScoreDistribution.nominal_flag_rate(3.0), 0.0026997960632601866, places=12)

    @settings(max_examples=1000, deadline=None)
    @given(st.floats(-10, 10), st.floats(0.01, 5.0), st.floats(0.1, 5.0), st.floats(0.0, 5.0))
    def test_larger_threshold_flags_less(self, score, std, z_low, z_extra):
        dist = ScoreDistribution(0.0, std)
        if dist.flags(score, z_low + z_extra):
            self.assertTrue(dist.flags(score, z_low))

    @settings(max_examples=1000, deadline=None)
    @given(st.floats(-1, 1), st.floats(0.01, 1.0), st.floats(0.1, 5.0))
    def test_endpoints_always_flag(self, mean, std, z_p):
        dist = ScoreDistribution(mean, std)
        lo, hi = dist.interval(z_p)
        self.assertTrue(dist.flags(lo, z_p))
        self.assertTrue(dist.flags(hi, z_p))


class MergeTest(unittest.TestCase):

    def test_examples(self):
        self.assertEqual(merge_flags([0, 20, 40, 60, 80], [0, 0, 1, 1, 0], 40), [(40, 100)])
        self.assertEqual(merge_flags([0, 20, 40], [0, 0, 0], 40), [])
        self.assertEqual(merge_flags([0, 20, 40, 60, 80, 100], [1, 0, 0, 0, 0, 1], 40), [(0, 40), (100, 140)])
        self.assertEqual(merge_flags([0, 40], [1, 1], 40), [(0, 80)])

    @settings(max_examples=1000, deadline=None)
    @given(st.lists(st.booleans(), max_size=60), st.integers(1, 50), st.integers(1, 50))
    def test_disjoint_sorted_cover(self, flags, size, stride):
        stride = min(stride, size)
        starts = [k * stride for k in range(len(flags))]
        intervals = merge_flags(starts, flags, size)
        for (a, b), (c, d) in zip(intervals, intervals[1:]):
            self.assertLess(b, c)
        covered = np.zeros(len(flags) * stride + size, dtype=bool)
        for start, flag in zip(starts, flags):
            if flag:
                covered[start:start + size] = True
        merged = np.zeros_like(covered)
        for a, b in intervals:
            self.assertLess(a, b)
            merged[a:b] = True
        np.testing.assert_array_equal(merged, covered)


class GanDetectorTest(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.features = derive_feature_matrix(generate_normal(FeederConfig(duration_s=5.0)))
        cls.block = FeatureBlock(cls.features[:40], 0)
        cls.ipq = make_gan(cls.features, FeatureSet.IPQ9, 0.5)
        cls.v = make_gan(cls.features, FeatureSet.V3, 0.5)

    @settings(max_examples=1000, deadline=None)
    @given(st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.floats(0.5, 4.0))
    def test_enhanced_flags_superset(self, s_ipq, s_v, z_p):
        self.ipq.discriminator.head.b[:] = logit(s_ipq)
        self.v.discriminator.head.b[:] = logit(s_v)
        d = EnhancedDetector(self.ipq, DIST, self.v, DIST, DetectorConfig(z_p=z_p))
        flag, s1, s2 = detect_enhanced(d, self.block)
        f1, f2 = bool(DIST.flags(s1, z_p)), bool(DIST.flags(s2, z_p))
        self.assertGreaterEqual(flag, int(f1))
        self.assertGreaterEqual(flag, int(f2))
        self.assertEqual(flag, int(f1 or f2))

    def test_basic_quiet_and_flagged(self):
        quiet = BasicDetector(make_gan(self.features, FeatureSet.ALL12, 0.5), DIST)
        flag, s = detect_basic(quiet, self.block)
        self.assertEqual(flag, 0)
        self.assertAlmostEqual(s, 0.5)
        loud = BasicDetector(make_gan(self.features, FeatureSet.ALL12, 0.7), DIST)
        flag, s = detect_basic(loud, self.block)
        self.assertEqual(flag, 1)
        self.assertAlmostEqual(s, 0.7)

    def test_enhanced_is_disjunction(self):
        for s_ipq, s_v, expected in ((0.5, 0.5, 0), (0.7, 0.5, 1), (0.5, 0.2, 1), (0.8, 0.8, 1)):
            with self.subTest(s1=s_ipq, s2=s_v):
                d = EnhancedDetector(make_gan(self.features, FeatureSet.IPQ9, s_ipq), DIST,
                                     make_gan(self.features, FeatureSet.V3, s_v), DIST)
                flag, s1, s2 = detect_enhanced(d, self.block)
                self.assertEqual(flag, expected)
                self.assertAlmostEqual(s1, s_ipq)
                self.assertAlmostEqual(s2, s_v)

    def test_fired_models(self):
        d = EnhancedDetector(make_gan(self.features, FeatureSet.IPQ9, 0.5), DIST,
                             make_gan(self.features, FeatureSet.V3, 0.9), DIST)
        windows = d.scan(self.features)
        self.assertEqual(len(windows), (len(self.features) - 40) // 20 + 1)
        self.assertTrue(all(w.flag and w.fired == ('v3',) for w in windows))
        self.assertTrue(all(math.isnan(w.score_s) for w in windows))

    def test_feature_set_mismatch(self):
        basic_model = make_gan(self.features, FeatureSet.ALL12, 0.5)
        with self.assertRaises(DataError):
            EnhancedDetector(basic_model, DIST, make_gan(self.features, FeatureSet.V3, 0.5), DIST)
        with self.assertRaises(DataError):
            BasicDetector(make_gan(self.features, FeatureSet.V3, 0.5), DIST)
        d = BasicDetector(basic_model, DIST)
        with self.assertRaises(DataError):
            detect_basic(d, self.block.project(FeatureSet.V3))

    def test_score_block(self):
        gan = make_gan(self.features, FeatureSet.ALL12, seed=4)
        prepared = prepare_block(gan, self.block)
        self.assertIs(prepared.feature_set, FeatureSet.ALL12)
        s = score_block(gan, prepared)
        self.assertTrue(0.0 < s < 1.0)
        self.assertEqual(detect_basic(BasicDetector(gan, DIST), self.block)[1], s)
        self.assertAlmostEqual(BasicDetector(gan, DIST).scan(self.features[:40])[0].score_s, s)
        with self.assertRaises(DataError):
            score_block(gan, self.block.project(FeatureSet.V3))
        with self.assertRaises(DataError):
            prepare_block(gan, self.block.project(FeatureSet.V3))

    def test_scan_offsets(self):
        d = BasicDetector(make_gan(self.features, FeatureSet.ALL12, seed=4), DIST, DetectorConfig(size=30, stride=10))
        windows = d.scan(self.features[:100], first_index=1000, skip=5)
        self.assertEqual([w.start for w in windows], [1005, 1015, 1025, 1035, 1045, 1055, 1065])


class RunStreamTest(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        specs = [EventSpec(EventKind.VOLTAGE_SAG, 900, 120, ('A', 'B', 'C'), 0.2),
                 EventSpec(EventKind.INRUSH, 1800, 60, ('B',), 1.0)]
        cls.stream, cls.truth = build_corpus(FeederConfig(duration_s=20.0), specs)
        features = derive_feature_matrix(generate_normal(FeederConfig(duration_s=5.0, seed=21)))
        cls.basic = BasicDetector(make_gan(features, FeatureSet.ALL12, seed=2), ScoreDistribution(0.5, 0.01))
        cls.mad = MadDetector(MadConfig(coarse_window=60, fine_window=20))

    def test_empty_stream(self):
        for detector in (self.basic, self.mad):
            with self.subTest(source=detector.source):
                report = run_stream(detector, PhasorStream.empty())
                self.assertEqual(report.windows, [])
                self.assertEqual(report.intervals, [])
                self.assertEqual(report.flag_rate(), 0.0)
                self.assertEqual(run_stream(detector, stream_slice(self.stream, 0, 39)).windows, [])

    def test_frames_and_stream_agree(self):
        part = stream_slice(self.stream, 0, 200)
        a = run_stream(self.basic, part)
        b = run_stream(self.basic, list(part))
        self.assertEqual([w.start for w in a.windows], [w.start for w in b.windows])
        np.testing.assert_allclose([w.score_s for w in a.windows], [w.score_s for w in b.windows], rtol=1e-12)

    def test_mad_finds_injected_events(self):
        report = run_stream(self.mad, self.stream)
        self.assertIsInstance(report, DetectionReport)
        intervals = report.intervals
        for t_start, t_end in self.truth.intervals():
            with self.subTest(event=(t_start, t_end)):
                self.assertTrue(any(a <= t_end and b > t_start for a, b in intervals))

    def test_streaming_matches_batch(self):
        cuts = [0, 1, 38, 39, 40, 77, 500, 501, 1333, 2000, 2399, 2400]
        for detector in (self.basic, self.mad):
            with self.subTest(source=detector.source):
                batch = run_stream(detector, self.stream)
                streaming = StreamingDetector(detector)
                returned = []
                for a, b in zip(cuts, cuts[1:]):
                    returned.extend(streaming.push_stream(stream_slice(self.stream, a, b)))
                self.assertEqual(len(returned), len(batch.windows))
                self.assertEqual([w.start for w in streaming.report.windows], [w.start for w in batch.windows])
                self.assertEqual(streaming.report.flags.tolist(), batch.flags.tolist())
                np.testing.assert_allclose([w.score_s for w in streaming.report.windows],
                                           [w.score_s for w in batch.windows], rtol=1e-12)

    def test_push_single_frames(self):
        streaming = StreamingDetector(self.mad)
        completed = []
        for k in range(100):
            results = streaming.push(self.stream[k])
            if results:
                completed.append((k, [w.start for w in results]))
        self.assertEqual(completed, [(39, [0]), (59, [20]), (79, [40]), (99, [60])])

    def test_continuity_errors(self):
        streaming = StreamingDetector(self.basic)
        streaming.push_stream(stream_slice(self.stream, 0, 100))
        with self.assertRaises(DataError):
            streaming.push_stream(stream_slice(self.stream, 50, 60))
        with self.assertRaises(DataError):
            streaming.push_stream(stream_slice(self.stream, 150, 200))
        self.assertEqual(len(streaming.push_stream(stream_slice(self.stream, 100, 140))), 2)
