"""
Statistical benchmark detector: absolute deviation around the median with two trailing window sizes.

A sample is anomalous if, for any monitored feature, it deviates from the trailing median by more than
k scaled MADs in either the coarse or the fine window. A detection window is flagged if it contains at
least one anomalous sample. Nothing is trained; the statistics come from the test stream itself.
"""
import logging
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from detection.detector import DetectorConfig, WindowResult
from phasor.data import FEATURE_NAMES, window_array
from util.errors import ConfigError

logger = logging.getLogger(__name__)

SCALE_MAD = 1.4826
"""Makes the MAD a consistent estimator of the Normal standard deviation"""
MAD_FLOOR = 1e-12
ROLLING_CHUNK = 8192


@dataclass(frozen=True)
class MadConfig:
    coarse_window: int = 480
    fine_window: int = 120
    k: float = 5.0
    mad_scale: float = SCALE_MAD
    features: tuple = FEATURE_NAMES
    """Names of the monitored feature columns"""

    def __post_init__(self):
        if min(self.coarse_window, self.fine_window) < 3:
            raise ConfigError('MAD windows must hold at least 3 samples')
        if not self.k > 0:
            raise ConfigError('mad.k must be positive, got {0}'.format(self.k))
        if not self.mad_scale > 0:
            raise ConfigError('mad.mad_scale must be positive')
        unknown = [f for f in self.features if f not in FEATURE_NAMES]
        if unknown or not self.features:
            raise ConfigError('mad.features: unknown feature(s) {0}'.format(', '.join(unknown) or '(none)'))

    @property
    def columns(self) -> list:
        return [FEATURE_NAMES.index(f) for f in self.features]

    @property
    def windows(self) -> tuple:
        return self.coarse_window, self.fine_window


def rolling_median_mad(series, window: int, mad_scale: float = SCALE_MAD):
    """
    Trailing-window median and scaled median absolute deviation.

    :return: (median, mad) arrays for sample indices window-1 .. n-1 (empty if the series is shorter than the
        window). The MAD is floored at 1e-12 * max(|median|, 1).
    """
    series = np.asarray(series, dtype=float).reshape(-1)
    if len(series) < window:
        return np.empty(0), np.empty(0)
    views = sliding_window_view(series, window)
    medians = np.empty(len(views))
    mads = np.empty(len(views))
    for k in range(0, len(views), ROLLING_CHUNK):
        chunk = views[k:k + ROLLING_CHUNK]
        med = np.median(chunk, axis=1)
        medians[k:k + len(chunk)] = med
        mads[k:k + len(chunk)] = np.median(np.abs(chunk - med[:, None]), axis=1)
    mads = np.maximum(mads * mad_scale, MAD_FLOOR * np.maximum(np.abs(medians), 1.0))
    return medians, mads


def deviation_scores(features: np.ndarray, cfg: MadConfig):
    """
    Per-sample anomaly test over every monitored feature and both window sizes.
    :param features: (n, 12) raw feature rows
    :return: (anomalous flags (n,), largest |x - median| / MAD seen at each sample (n,))
    """
    n = len(features)
    anomalous = np.zeros(n, dtype=bool)
    score = np.zeros(n)
    for col in cfg.columns:
        x = features[:, col]
        for window in cfg.windows:
            med, mad = rolling_median_mad(x, window, cfg.mad_scale)
            if len(med) == 0:
                continue
            dev = np.abs(x[window - 1:] - med)
            anomalous[window - 1:] |= dev > cfg.k * mad
            score[window - 1:] = np.maximum(score[window - 1:], dev / mad)
    return anomalous, score


def detect_mad(features: np.ndarray, cfg: MadConfig, window: DetectorConfig = DetectorConfig(),
               first_index: int = 0, skip: int = 0) -> list:
    """
    Flags each full detection window of features[skip:] that holds an anomalous sample.
    Rows before skip only serve as trailing history.

    :param features: (n, 12) raw feature rows, features[0] being sample first_index
    :return: WindowResults with score_s = the window's largest deviation in MADs
    """
    features = np.asarray(features, dtype=float)
    if len(features) == 0:
        return []
    anomalous, score = deviation_scores(features, cfg)
    columns = np.column_stack([anomalous[skip:], score[skip:]])
    starts, blocks = window_array(columns, window.size, window.stride)
    return [WindowResult(int(start + first_index + skip), bool(block[:, 0].any()), score_s=float(block[:, 1].max()),
                         fired=('mad',) if block[:, 0].any() else ())
            for start, block in zip(starts, blocks)]


@dataclass(frozen=True, eq=False)
class MadDetector:
    mad: MadConfig = MadConfig()
    cfg: DetectorConfig = DetectorConfig()
    source = 'mad'

    @property
    def history(self) -> int:
        return max(self.mad.windows) - 1

    def scan(self, features: np.ndarray, first_index: int = 0, skip: int = 0) -> list:
        return detect_mad(features, self.mad, self.cfg, first_index, skip)
