"""
Phasor data model.

Raw three-phase micro-PMU frames, the twelve features derived from them (V, I, P, Q per phase),
per-feature normalization and the slicing of feature streams into overlapping windows.
"""
import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterator, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from util.errors import ConfigError, DataError

logger = logging.getLogger(__name__)

SAMPLE_RATE = 120
"""Readings per second"""
PHASES = ('A', 'B', 'C')
FEATURE_NAMES = ('V_A', 'V_B', 'V_C', 'I_A', 'I_B', 'I_C', 'P_A', 'P_B', 'P_C', 'Q_A', 'Q_B', 'Q_C')
DEFAULT_WINDOW = 40
DEFAULT_STRIDE = 20
NORMALIZER_EPS = 1e-9


class FeatureSet(Enum):
    """
    Feature subsets a model can be trained on.
    The value holds the column indices into the twelve-feature matrix.
    """
    ALL12 = tuple(range(12))
    V3 = (0, 1, 2)
    IPQ9 = tuple(range(3, 12))

    @property
    def columns(self) -> tuple:
        return self.value

    @property
    def width(self) -> int:
        return len(self.value)

    def project(self, matrix: np.ndarray) -> np.ndarray:
        """
        Selects this set's columns from a twelve-feature array (last axis).
        """
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape[-1] != FeatureSet.ALL12.width:
            raise DataError('Projection needs 12 features, got {0}'.format(matrix.shape[-1]))
        if self is FeatureSet.ALL12:
            return matrix
        return matrix[..., list(self.columns)]


def wrap_angle(angle):
    """
    Wraps angles (scalar or array) into (-pi, pi]. Values already inside the range are returned unchanged.
    """
    angle = np.asarray(angle, dtype=float)
    wrapped = np.mod(angle + np.pi, 2 * np.pi) - np.pi
    wrapped = np.where(wrapped <= -np.pi, np.pi, wrapped)
    inside = (angle > -np.pi) & (angle <= np.pi)
    return np.where(inside, angle, wrapped)


def _check_phasor_arrays(v_mag, v_ang, i_mag, i_ang) -> None:
    if np.any(v_mag < 0) or np.any(i_mag < 0):
        raise DataError('Phasor magnitudes must be non-negative')
    for name, ang in (('v_ang', v_ang), ('i_ang', i_ang)):
        if np.any(~np.isfinite(ang)) or np.any(ang <= -np.pi) or np.any(ang > np.pi):
            raise DataError('Angles in {0} must lie in (-pi, pi]'.format(name))
    if not (np.all(np.isfinite(v_mag)) and np.all(np.isfinite(i_mag))):
        raise DataError('Phasor magnitudes must be finite')


@dataclass(frozen=True)
class PhasorFrame:
    """
    One timestamped three-phase reading. Per-phase tuples are ordered A, B, C; angles in radians.
    """
    timestamp: int
    v_mag: tuple
    v_ang: tuple
    i_mag: tuple
    i_ang: tuple

    def __post_init__(self):
        _check_phasor_arrays(np.asarray(self.v_mag, dtype=float), np.asarray(self.v_ang, dtype=float),
                             np.asarray(self.i_mag, dtype=float), np.asarray(self.i_ang, dtype=float))


def _check_timestamps(ts: np.ndarray) -> None:
    if ts.size < 2:
        return
    steps = np.diff(ts)
    if np.any(steps <= 0):
        bad = int(np.argmax(steps <= 0)) + 1
        raise DataError('Out-of-order timestamps at row {0} (timestamp {1})'.format(bad, int(ts[bad])))
    if np.any(steps != 1):
        bad = int(np.argmax(steps != 1)) + 1
        raise DataError('Gap in stream before timestamp {0}; streams must be gap-free'.format(int(ts[bad])))


@dataclass(frozen=True, eq=False)
class PhasorStream:
    """
    A gap-free sequence of PhasorFrames held column-wise.
    ts has shape (n,), every other field (n, 3). Indexing and iteration yield PhasorFrame objects.
    """
    ts: np.ndarray
    v_mag: np.ndarray
    v_ang: np.ndarray
    i_mag: np.ndarray
    i_ang: np.ndarray

    def __post_init__(self):
        n = len(self.ts)
        for name in ('v_mag', 'v_ang', 'i_mag', 'i_ang'):
            arr = getattr(self, name)
            if arr.shape != (n, 3):
                raise DataError('Field {0} has shape {1}, expected ({2}, 3)'.format(name, arr.shape, n))
            arr.setflags(write=False)
        self.ts.setflags(write=False)
        _check_phasor_arrays(self.v_mag, self.v_ang, self.i_mag, self.i_ang)
        _check_timestamps(self.ts)

    @classmethod
    def from_arrays(cls, ts, v_mag, v_ang, i_mag, i_ang) -> 'PhasorStream':
        return cls(np.array(ts, dtype=np.int64).reshape(-1),
                   *(np.array(a, dtype=float).reshape(-1, 3) for a in (v_mag, v_ang, i_mag, i_ang)))

    @classmethod
    def from_frames(cls, frames: Sequence[PhasorFrame]) -> 'PhasorStream':
        frames = list(frames)
        return cls.from_arrays([f.timestamp for f in frames],
                               [f.v_mag for f in frames], [f.v_ang for f in frames],
                               [f.i_mag for f in frames], [f.i_ang for f in frames])

    @classmethod
    def empty(cls) -> 'PhasorStream':
        return cls.from_arrays([], [], [], [], [])

    def __len__(self) -> int:
        return len(self.ts)

    def __getitem__(self, k: int) -> PhasorFrame:
        return PhasorFrame(int(self.ts[k]), tuple(self.v_mag[k].tolist()), tuple(self.v_ang[k].tolist()),
                           tuple(self.i_mag[k].tolist()), tuple(self.i_ang[k].tolist()))

    def __iter__(self) -> Iterator[PhasorFrame]:
        for k in range(len(self)):
            yield self[k]

    def with_channels(self, **channels) -> 'PhasorStream':
        """
        Returns a copy with the given channels replaced (re-validated).
        """
        return replace(self, **{name: np.array(arr, dtype=float) for name, arr in channels.items()})

    def writable_channels(self) -> dict:
        """Fresh writable copies of the four channel arrays"""
        return {name: np.array(getattr(self, name)) for name in ('v_mag', 'v_ang', 'i_mag', 'i_ang')}


@dataclass(frozen=True)
class FeatureSample:
    """
    The twelve derived features of one frame: per-phase tuples ordered A, B, C.
    """
    V: tuple
    I: tuple
    P: tuple
    Q: tuple

    def as_array(self) -> np.ndarray:
        return np.array(self.V + self.I + self.P + self.Q, dtype=float)

    @classmethod
    def from_array(cls, values) -> 'FeatureSample':
        values = [float(x) for x in values]
        if len(values) != 12:
            raise DataError('A feature sample has 12 values, got {0}'.format(len(values)))
        return cls(tuple(values[0:3]), tuple(values[3:6]), tuple(values[6:9]), tuple(values[9:12]))


def _powers(v_mag, v_ang, i_mag, i_ang):
    diff = wrap_angle(np.asarray(v_ang) - np.asarray(i_ang))
    apparent = np.asarray(v_mag) * np.asarray(i_mag)
    return apparent * np.cos(diff), apparent * np.sin(diff)


def derive_features(frame: PhasorFrame) -> FeatureSample:
    """
    Derives V, I, P and Q per phase from one frame.
    P and Q come from the voltage-current angle difference: P = V*I*cos(dphi), Q = V*I*sin(dphi).
    """
    p, q = _powers(frame.v_mag, frame.v_ang, frame.i_mag, frame.i_ang)
    return FeatureSample(tuple(float(x) for x in frame.v_mag), tuple(float(x) for x in frame.i_mag),
                         tuple(p.tolist()), tuple(q.tolist()))


def derive_feature_matrix(stream: PhasorStream) -> np.ndarray:
    """
    Vectorized derive_features over a whole stream.
    :return: array of shape (n, 12), columns in FEATURE_NAMES order
    """
    p, q = _powers(stream.v_mag, stream.v_ang, stream.i_mag, stream.i_ang)
    return np.hstack([stream.v_mag, stream.i_mag, p, q])


def as_feature_matrix(samples: Union[np.ndarray, Sequence[FeatureSample]]) -> np.ndarray:
    """Accepts a feature matrix or a sequence of FeatureSamples and returns a 2-D float array"""
    if isinstance(samples, np.ndarray):
        if samples.size == 0:
            return np.empty((0, 0))
        if samples.ndim != 2:
            raise DataError('Feature matrix must be 2-D, got shape {0}'.format(samples.shape))
        return samples.astype(float, copy=False)
    samples = list(samples)
    if not samples:
        return np.empty((0, 0))
    if isinstance(samples[0], FeatureSample):
        return np.vstack([s.as_array() for s in samples])
    return np.asarray(samples, dtype=float)


@dataclass(frozen=True, eq=False)
class FeatureBlock:
    """
    A window of W consecutive feature rows.
    """
    features: np.ndarray
    """(W, F) matrix"""
    start_index: int
    """Sample index of the first row"""
    feature_set: FeatureSet = FeatureSet.ALL12

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[1] != self.feature_set.width:
            raise DataError('Block of shape {0} does not match feature set {1}'
                            .format(self.features.shape, self.feature_set.name))

    @property
    def size(self) -> int:
        return self.features.shape[0]

    def project(self, feature_set: FeatureSet) -> 'FeatureBlock':
        if self.feature_set is not FeatureSet.ALL12 and feature_set is not self.feature_set:
            raise DataError('Cannot project a {0} block to {1}'.format(self.feature_set.name, feature_set.name))
        return FeatureBlock(feature_set.project(self.features), self.start_index, feature_set)


def _check_window(size: int, stride: int) -> None:
    if size < 1:
        raise ConfigError('Window size must be at least 1, got {0}'.format(size))
    if not 1 <= stride <= size:
        raise ConfigError('Window stride must lie in [1, {0}], got {1}'.format(size, stride))


def window_count(length: int, size: int, stride: int) -> int:
    return (length - size) // stride + 1 if length >= size else 0


def window_array(matrix: np.ndarray, size: int = DEFAULT_WINDOW, stride: int = DEFAULT_STRIDE):
    """
    Slices a (n, F) matrix into full windows.
    :return: (starts, blocks): starts of shape (B,), blocks of shape (B, size, F)
    """
    _check_window(size, stride)
    matrix = np.asarray(matrix, dtype=float)
    count = window_count(len(matrix), size, stride)
    if count == 0:
        width = matrix.shape[1] if matrix.ndim == 2 else 0
        return np.empty(0, dtype=np.int64), np.empty((0, size, width))
    views = sliding_window_view(matrix, size, axis=0)[::stride]
    return np.arange(count, dtype=np.int64) * stride, np.ascontiguousarray(views.transpose(0, 2, 1))


def window_stream(samples, size: int = DEFAULT_WINDOW, stride: int = DEFAULT_STRIDE,
                  feature_set: FeatureSet = FeatureSet.ALL12, first_index: int = 0) -> list:
    """
    Slices a feature stream into overlapping blocks (overlap = size - stride).
    Only fully-filled blocks are emitted; a stream shorter than size yields no blocks.

    :param samples: a (n, F) matrix or a sequence of FeatureSamples
    :param first_index: sample index of the stream's first row
    :return: list of FeatureBlock starting at first_index, first_index + stride, ...
    """
    _check_window(size, stride)
    matrix = as_feature_matrix(samples)
    if len(matrix) < size:
        return []
    starts, blocks = window_array(matrix, size, stride)
    return [FeatureBlock(block, int(first_index + start), feature_set) for start, block in zip(starts, blocks)]


@dataclass(frozen=True, eq=False)
class Normalizer:
    """
    Per-feature affine map of [lo, hi] onto [-1, 1], fitted on training data.
    Values outside the fitted range are extrapolated, not clipped.
    """
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        if self.lo.shape != self.hi.shape or np.any(self.hi <= self.lo):
            raise DataError('Normalizer needs hi > lo for every feature')

    @property
    def width(self) -> int:
        return len(self.lo)

    def normalize(self, values: np.ndarray) -> np.ndarray:
        """Maps an array whose last axis holds the features"""
        return 2.0 * (np.asarray(values, dtype=float) - self.lo) / (self.hi - self.lo) - 1.0

    def denormalize(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=float) + 1.0) * 0.5 * (self.hi - self.lo) + self.lo


def fit_normalizer(training) -> Normalizer:
    """
    Fits per-feature min/max over the training data; constant features get hi = lo + 1e-9.
    :param training: a (n, F) matrix or a sequence of FeatureSamples
    """
    matrix = as_feature_matrix(training)
    if matrix.size == 0:
        raise DataError('no training data')
    lo = matrix.min(axis=0)
    hi = matrix.max(axis=0)
    hi = np.where(hi - lo < NORMALIZER_EPS, lo + NORMALIZER_EPS, hi)
    return Normalizer(lo, hi)


def normalize(n: Normalizer, s: Union[FeatureSample, np.ndarray]):
    """
    Normalizes a FeatureSample (returned as a FeatureSample in normalized units) or an array.
    """
    if isinstance(s, FeatureSample):
        return FeatureSample.from_array(n.normalize(s.as_array()))
    return n.normalize(s)


def denormalize(n: Normalizer, s: Union[FeatureSample, np.ndarray]):
    if isinstance(s, FeatureSample):
        return FeatureSample.from_array(n.denormalize(s.as_array()))
    return n.denormalize(s)
