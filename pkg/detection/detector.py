"""
Event detectors built on trained discriminators.

The discriminator's score on a window of normal data follows a distribution fitted once after training.
A window whose score leaves the open interval (mean - z_p * std, mean + z_p * std) is flagged as an event.
The basic detector uses one model over all twelve features; the enhanced detector ORs a model over the nine
current/power features with a separate model over the three voltages.
"""
import logging
from dataclasses import dataclass, field
from typing import Iterable, Union

import numpy as np
from scipy.stats import norm

from gan.trainer import TrainedGan
from nn.network import discriminator_forward, discriminator_scores
from phasor.data import (DEFAULT_STRIDE, DEFAULT_WINDOW, FeatureBlock, FeatureSet, PhasorFrame, PhasorStream,
                         derive_feature_matrix, window_array, window_count)
from util.errors import ConfigError, DataError

logger = logging.getLogger(__name__)

STD_FLOOR = 1e-9


@dataclass(frozen=True)
class ScoreDistribution:
    """Normal model N(mean, std^2) of discriminator scores on normal data"""
    mean: float
    std: float

    def __post_init__(self):
        if not (np.isfinite(self.mean) and np.isfinite(self.std)) or self.std <= 0:
            raise DataError('Score distribution needs a finite mean and positive std, got ({0}, {1})'
                            .format(self.mean, self.std))

    def interval(self, z_p: float) -> tuple:
        return self.mean - z_p * self.std, self.mean + z_p * self.std

    def flags(self, scores, z_p: float):
        """
        True where a score lies outside the open interval; the endpoints themselves flag.
        """
        lo, hi = self.interval(z_p)
        scores = np.asarray(scores, dtype=float)
        return ~((scores > lo) & (scores < hi))

    @staticmethod
    def nominal_flag_rate(z_p: float) -> float:
        """Two-sided tail mass of the Normal model beyond z_p standard deviations"""
        return float(2.0 * norm.sf(z_p))


def fit_score_distribution(scores) -> ScoreDistribution:
    """
    Sample mean and sample standard deviation (n - 1 denominator), the latter floored at 1e-9.
    """
    scores = np.asarray(scores, dtype=float).reshape(-1)
    if len(scores) < 2:
        raise DataError('Fitting a score distribution needs at least 2 scores, got {0}'.format(len(scores)))
    if not np.all(np.isfinite(scores)):
        raise DataError('Scores contain non-finite values')
    return ScoreDistribution(float(np.mean(scores)), max(float(np.std(scores, ddof=1)), STD_FLOOR))


@dataclass(frozen=True)
class DetectorConfig:
    z_p: float = 3.0
    size: int = DEFAULT_WINDOW
    stride: int = DEFAULT_STRIDE

    def __post_init__(self):
        if not self.z_p > 0:
            raise ConfigError('detector.z_p must be positive, got {0}'.format(self.z_p))
        if self.size < 1 or not 1 <= self.stride <= self.size:
            raise ConfigError('Invalid window {0}/{1}'.format(self.size, self.stride))


@dataclass(frozen=True)
class WindowResult:
    start: int
    """Sample index of the window's first row"""
    flag: bool
    score_s: float = float('nan')
    score_s1: float = float('nan')
    """Score of the current/power model (enhanced)"""
    score_s2: float = float('nan')
    """Score of the voltage model (enhanced)"""
    fired: tuple = ()
    """Names of the models whose score left its interval"""


def merge_flags(starts, flags, size: int) -> list:
    """
    Coalesces flagged windows that touch or overlap into maximal half-open intervals.
    :param starts: window start indices, ascending
    :param flags: per-window flags
    :return: sorted disjoint [(start, end)] with end exclusive
    """
    intervals = []
    for start, flag in zip(starts, flags):
        if not flag:
            continue
        start = int(start)
        if intervals and start <= intervals[-1][1]:
            intervals[-1][1] = max(intervals[-1][1], start + size)
        else:
            intervals.append([start, start + size])
    return [tuple(i) for i in intervals]


@dataclass
class DetectionReport:
    source: str
    """Detector name: basic, enhanced or mad"""
    size: int = DEFAULT_WINDOW
    windows: list = field(default_factory=list)

    @property
    def starts(self) -> np.ndarray:
        return np.array([w.start for w in self.windows], dtype=np.int64)

    @property
    def flags(self) -> np.ndarray:
        return np.array([w.flag for w in self.windows], dtype=bool)

    @property
    def intervals(self) -> list:
        return merge_flags(self.starts, self.flags, self.size)

    def flag_rate(self) -> float:
        return float(np.mean(self.flags)) if self.windows else 0.0


def score_block(gan: TrainedGan, block: FeatureBlock) -> float:
    """
    Discriminator score of a block already projected and normalized for this model.
    """
    if block.feature_set is not gan.feature_set:
        raise DataError('feature set mismatch: model is {0}, block is {1}'
                        .format(gan.feature_set.name, block.feature_set.name))
    return discriminator_forward(gan.discriminator, block.features)


def prepare_block(gan: TrainedGan, block12: FeatureBlock) -> FeatureBlock:
    """Projects a raw twelve-feature block to the model's feature set and normalizes it"""
    if block12.feature_set is not FeatureSet.ALL12:
        raise DataError('Detectors take twelve-feature blocks, got {0}'.format(block12.feature_set.name))
    projected = block12.project(gan.feature_set)
    return FeatureBlock(gan.normalizer.normalize(projected.features), block12.start_index, gan.feature_set)


def _model_scores(gan: TrainedGan, blocks12: np.ndarray) -> np.ndarray:
    return discriminator_scores(gan.discriminator, gan.normalizer.normalize(gan.feature_set.project(blocks12)))


def _require(gan: TrainedGan, feature_set: FeatureSet, role: str) -> None:
    if gan.feature_set is not feature_set:
        raise DataError('feature set mismatch: {0} needs a {1} model, got {2}'
                        .format(role, feature_set.name, gan.feature_set.name))


class _WindowedDetector:
    """Shared windowing for detectors that score each window independently"""
    source = None
    history = 0
    """Samples before a window's start the detector reads"""
    cfg: DetectorConfig

    def score_windows(self, starts: np.ndarray, blocks12: np.ndarray) -> list:
        raise NotImplementedError()

    def scan(self, features: np.ndarray, first_index: int = 0, skip: int = 0) -> list:
        """
        Scores every full window of features[skip:].
        :param features: raw (n, 12) feature rows; the first `skip` rows are history only
        :param first_index: sample index of features[0]
        """
        starts, blocks = window_array(features[skip:], self.cfg.size, self.cfg.stride)
        if len(starts) == 0:
            return []
        return self.score_windows(starts + first_index + skip, blocks)


@dataclass(frozen=True, eq=False)
class BasicDetector(_WindowedDetector):
    gan: TrainedGan
    dist: ScoreDistribution
    cfg: DetectorConfig = DetectorConfig()
    source = 'basic'

    def __post_init__(self):
        _require(self.gan, FeatureSet.ALL12, 'the basic detector')

    def score_windows(self, starts: np.ndarray, blocks12: np.ndarray) -> list:
        scores = _model_scores(self.gan, blocks12)
        flags = self.dist.flags(scores, self.cfg.z_p)
        return [WindowResult(int(start), bool(flag), score_s=float(s), fired=('all12',) if flag else ())
                for start, s, flag in zip(starts, scores, flags)]


@dataclass(frozen=True, eq=False)
class EnhancedDetector(_WindowedDetector):
    gan_ipq: TrainedGan
    dist_ipq: ScoreDistribution
    """(mu, sigma) of the current/power model"""
    gan_v: TrainedGan
    dist_v: ScoreDistribution
    """(phi, varphi) of the voltage model"""
    cfg: DetectorConfig = DetectorConfig()
    source = 'enhanced'

    def __post_init__(self):
        _require(self.gan_ipq, FeatureSet.IPQ9, 'the enhanced detector')
        _require(self.gan_v, FeatureSet.V3, 'the enhanced detector')

    def score_windows(self, starts: np.ndarray, blocks12: np.ndarray) -> list:
        s1 = _model_scores(self.gan_ipq, blocks12)
        s2 = _model_scores(self.gan_v, blocks12)
        f1 = self.dist_ipq.flags(s1, self.cfg.z_p)
        f2 = self.dist_v.flags(s2, self.cfg.z_p)
        results = []
        for k, start in enumerate(starts):
            fired = tuple(name for name, f in (('ipq9', f1[k]), ('v3', f2[k])) if f)
            results.append(WindowResult(int(start), bool(f1[k] or f2[k]), score_s1=float(s1[k]), score_s2=float(s2[k]),
                                        fired=fired))
        return results


def detect_basic(d: BasicDetector, block12: FeatureBlock) -> tuple:
    """
    :param block12: raw twelve-feature block
    :return: (F, s)
    """
    s = score_block(d.gan, prepare_block(d.gan, block12))
    return int(bool(d.dist.flags(s, d.cfg.z_p))), s


def detect_enhanced(d: EnhancedDetector, block12: FeatureBlock) -> tuple:
    """
    :param block12: raw twelve-feature block, split into its current/power and voltage parts
    :return: (F, s1, s2)
    """
    s1 = score_block(d.gan_ipq, prepare_block(d.gan_ipq, block12))
    s2 = score_block(d.gan_v, prepare_block(d.gan_v, block12))
    flag = bool(d.dist_ipq.flags(s1, d.cfg.z_p)) or bool(d.dist_v.flags(s2, d.cfg.z_p))
    return int(flag), s1, s2


def _as_stream(frames: Union[PhasorStream, Iterable[PhasorFrame]]) -> PhasorStream:
    if isinstance(frames, PhasorStream):
        return frames
    frames = list(frames)
    return PhasorStream.from_frames(frames) if frames else PhasorStream.empty()


def run_stream(detector, frames: Union[PhasorStream, Iterable[PhasorFrame]]) -> DetectionReport:
    """
    Derives features from the frames, windows them and scores every full window.
    :param detector: BasicDetector, EnhancedDetector or MadDetector
    """
    stream = _as_stream(frames)
    report = DetectionReport(detector.source, detector.cfg.size)
    if len(stream) == 0:
        return report
    logger.info('>> Scanning {0} frames with the {1} detector'.format(len(stream), detector.source))
    report.windows = detector.scan(derive_feature_matrix(stream), int(stream.ts[0]))
    logger.info('<< {0} windows, {1} flagged, {2} merged interval(s)'
                .format(len(report.windows), int(report.flags.sum()), len(report.intervals)))
    return report


class StreamingDetector:
    """
    Incremental front end to a detector. A window's result is returned by the push that delivers its last frame.
    """

    def __init__(self, detector) -> None:
        self.detector = detector
        self.report = DetectionReport(detector.source, detector.cfg.size)
        self._buffer = np.empty((0, 12))
        self._buffer_start = None
        """Sample index of the first buffered row"""
        self._next_start = None
        self._last_ts = None

    def _check_continuity(self, stream: PhasorStream) -> None:
        first = int(stream.ts[0])
        if self._last_ts is None:
            self._buffer_start = self._next_start = first
        elif first <= self._last_ts:
            raise DataError('Out-of-order timestamps: {0} after {1}'.format(first, self._last_ts))
        elif first != self._last_ts + 1:
            raise DataError('Gap in stream before timestamp {0}; streams must be gap-free'.format(first))
        self._last_ts = int(stream.ts[-1])

    def push_stream(self, stream: PhasorStream) -> list:
        """
        Feeds a chunk of consecutive frames.
        :return: results of the windows completed by this chunk, in order
        """
        if len(stream) == 0:
            return []
        self._check_continuity(stream)
        self._buffer = np.vstack([self._buffer, derive_feature_matrix(stream)])
        size, stride = self.detector.cfg.size, self.detector.cfg.stride
        end = self._buffer_start + len(self._buffer)
        if window_count(end - self._next_start, size, stride) == 0:
            return []
        skip = self._next_start - self._buffer_start
        results = self.detector.scan(self._buffer, self._buffer_start, skip)
        self._next_start = results[-1].start + stride
        keep_from = max(self._next_start - self.detector.history, self._buffer_start)
        self._buffer = self._buffer[keep_from - self._buffer_start:]
        self._buffer_start = keep_from
        self.report.windows.extend(results)
        return results

    def push(self, frame: PhasorFrame) -> list:
        return self.push_stream(PhasorStream.from_frames([frame]))
