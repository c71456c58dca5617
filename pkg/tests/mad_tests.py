import unittest

import numpy as np

from detection.detector import DetectorConfig
from detection.mad import SCALE_MAD, MadConfig, MadDetector, deviation_scores, detect_mad, rolling_median_mad
from gen.feeder import FeederConfig, generate_normal
from phasor.data import FEATURE_NAMES, derive_feature_matrix
from util.errors import ConfigError
from util.randomization import rng_for

SMALL = MadConfig(coarse_window=40, fine_window=10, features=('V_A',))


def single_feature(series) -> np.ndarray:
    """A (n, 12) matrix carrying the series in V_A and constants elsewhere"""
    features = np.ones((len(series), len(FEATURE_NAMES)))
    features[:, 0] = series
    return features


class RollingTest(unittest.TestCase):
    """
    Unit tests for the trailing median / MAD
    """

    def test_example(self):
        med, mad = rolling_median_mad([1, 2, 3, 4, 100], 5, mad_scale=1.0)
        self.assertEqual(med.tolist(), [3.0])
        self.assertEqual(mad.tolist(), [1.0])
        _, scaled = rolling_median_mad([1, 2, 3, 4, 100], 5)
        self.assertAlmostEqual(scaled[0], SCALE_MAD)

    def test_naive_oracle(self):
        series = rng_for(1).normal(size=300)
        med, mad = rolling_median_mad(series, 17)
        self.assertEqual(len(med), 300 - 16)
        for i in (16, 17, 100, 299):
            with self.subTest(i=i):
                window = series[i - 16:i + 1]
                self.assertEqual(med[i - 16], np.median(window))
                self.assertAlmostEqual(mad[i - 16], SCALE_MAD * np.median(np.abs(window - np.median(window))), places=14)

    def test_short_series(self):
        med, mad = rolling_median_mad([1.0, 2.0], 3)
        self.assertEqual((len(med), len(mad)), (0, 0))

    def test_constant_series_floored(self):
        med, mad = rolling_median_mad(np.full(20, 7200.0), 5)
        np.testing.assert_array_equal(mad, np.full(16, 7200.0 * 1e-12))


class DeviationTest(unittest.TestCase):

    def test_constant_never_flags(self):
        anomalous, score = deviation_scores(single_feature(np.full(200, 3.0)), SMALL)
        self.assertFalse(anomalous.any())
        self.assertEqual(score.max(), 0.0)

    def test_step_flags(self):
        series = 10.0 + 0.1 * np.sin(0.7 * np.arange(200))
        series[150:] += 20.0
        anomalous, _ = deviation_scores(single_feature(series), SMALL)
        self.assertTrue(anomalous[150])
        self.assertFalse(anomalous[:150].any())

    def test_slow_ramp_ignored(self):
        anomalous, _ = deviation_scores(single_feature(np.linspace(0.0, 1.0, 400)), SMALL)
        self.assertFalse(anomalous.any())

    def test_larger_k_never_adds_flags(self):
        features = single_feature(rng_for(3).standard_t(2, size=500))
        previous = None
        for k in (2.0, 3.0, 5.0, 8.0):
            with self.subTest(k=k):
                anomalous, _ = deviation_scores(features, MadConfig(40, 10, k, features=('V_A',)))
                if previous is not None:
                    self.assertFalse(np.any(anomalous & ~previous))
                previous = anomalous

    def test_unmonitored_features_ignored(self):
        features = single_feature(np.full(100, 3.0))
        features[60, 5] = 1e6
        anomalous, _ = deviation_scores(features, SMALL)
        self.assertFalse(anomalous.any())
        anomalous, _ = deviation_scores(features, MadConfig(40, 10, features=('V_A', 'I_C')))
        self.assertTrue(anomalous[60])


class DetectMadTest(unittest.TestCase):

    def test_windows_flag_spike(self):
        series = np.full(200, 5.0)
        series[105] = 6.0
        results = detect_mad(single_feature(series), SMALL)
        self.assertEqual([r.start for r in results], [0, 20, 40, 60, 80, 100, 120, 140, 160])
        self.assertEqual([r.start for r in results if r.flag], [80, 100])
        self.assertEqual(results[4].fired, ('mad',))
        self.assertEqual(results[0].fired, ())

    def test_skip_keeps_history(self):
        series = 10.0 + rng_for(4).normal(size=300)
        features = single_feature(series)
        full = detect_mad(features, SMALL, DetectorConfig(size=40, stride=20))
        tail = detect_mad(features, SMALL, DetectorConfig(size=40, stride=20), first_index=0, skip=100)
        by_start = {r.start: r for r in full}
        for r in tail:
            with self.subTest(start=r.start):
                self.assertEqual(r.flag, by_start[r.start].flag)
                self.assertEqual(r.score_s, by_start[r.start].score_s)

    def test_empty(self):
        self.assertEqual(detect_mad(np.empty((0, 12)), SMALL), [])

    def test_detector_history(self):
        self.assertEqual(MadDetector().history, 479)
        self.assertEqual(MadDetector(SMALL).source, 'mad')

    def test_config_validation(self):
        for kwargs in ({'coarse_window': 2}, {'k': 0.0}, {'mad_scale': -1.0}, {'features': ('V_X',)},
                       {'features': ()}):
            with self.subTest(**kwargs):
                with self.assertRaises(ConfigError):
                    MadConfig(**kwargs)
        self.assertEqual(MadConfig(features=('I_A', 'Q_C')).columns, [3, 11])

    def test_clean_stream_flag_rate(self):
        for seed in (7, 19):
            features = derive_feature_matrix(generate_normal(FeederConfig(seed=seed, duration_s=600.0)))
            results = MadDetector().scan(features)
            with self.subTest(seed=seed):
                self.assertEqual(len(results), (600 * 120 - 40) // 20 + 1)
                self.assertLess(np.mean([r.flag for r in results]), 0.01)
