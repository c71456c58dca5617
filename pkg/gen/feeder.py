"""
Synthetic distribution-feeder streams.

Generates 120 Hz three-phase phasor streams of normal operation (slow load drift plus measurement noise)
and injects parametric event shapes with exact ground-truth labels.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import pandas as pd

from phasor.data import SAMPLE_RATE, PhasorStream, wrap_angle
from util.errors import ConfigError, DataError
from util.randomization import PHASES, rng_for

logger = logging.getLogger(__name__)

# Phase offsets of a balanced system: A leads, B lags by 120 degrees, C leads by 120 degrees
PHASE_OFFSETS = np.array([0.0, -2.0 * np.pi / 3.0, 2.0 * np.pi / 3.0])
INRUSH_VOLTAGE_COUPLING = 0.05
CAP_BANK_VOLTAGE_STEP = 0.1


class EventKind(Enum):
    INRUSH = 'inrush'
    """Current spike decaying exponentially, slight voltage dip"""
    CAP_BANK = 'cap_bank'
    """Power-factor step with a small voltage step"""
    IPQ_SMALL = 'ipq_small'
    """Small active-current ramp: moves I and P, leaves Q and V"""
    OSCILLATION = 'oscillation'
    """Sinusoid superimposed on the current magnitude"""
    LONG_TRANSIENT = 'long_transient'
    """Current step followed by a slow envelope with ripple, lasting tens of seconds"""
    VOLTAGE_SAG = 'voltage_sag'
    """Multiplicative voltage dip, current untouched"""
    VOLTAGE_DAMPED_OSC = 'voltage_damped_osc'
    """Damped voltage oscillation, current untouched"""

    @property
    def oscillatory(self) -> bool:
        return self in (EventKind.OSCILLATION, EventKind.VOLTAGE_DAMPED_OSC)

    @property
    def voltage_only(self) -> bool:
        return self in (EventKind.VOLTAGE_SAG, EventKind.VOLTAGE_DAMPED_OSC)


@dataclass(frozen=True)
class FeederConfig:
    """
    Parameters of the simulated feeder. Noise levels are relative standard deviations
    (noise_ang in radians).
    """
    seed: int = 7
    duration_s: float = 3600.0
    base_v: float = 7200.0
    base_i: tuple = (100.0, 90.0, 110.0)
    noise_v: float = 0.0005
    noise_i: float = 0.004
    noise_ang: float = 0.002
    load_drift_period_s: float = 600.0
    load_drift_depth: float = 0.05
    voltage_drift_ratio: float = 0.1
    """Voltage sags by this fraction of the relative load drift"""
    pf_base: float = 0.3
    """Power-factor angle, radians"""

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ConfigError('feeder.duration_s must be positive, got {0}'.format(self.duration_s))
        if self.base_v <= 0 or len(self.base_i) != 3 or any(b <= 0 for b in self.base_i):
            raise ConfigError('Base magnitudes must be positive (base_i needs three values)')
        if min(self.noise_v, self.noise_i, self.noise_ang) < 0:
            raise ConfigError('Noise levels must be non-negative')
        if self.load_drift_period_s <= 0:
            raise ConfigError('feeder.load_drift_period_s must be positive')

    @property
    def length(self) -> int:
        """Number of frames"""
        return int(round(self.duration_s * SAMPLE_RATE))


@dataclass(frozen=True)
class EventSpec:
    kind: EventKind
    t_start: int
    """Sample index of the first affected frame"""
    duration: int
    """Samples"""
    phases: tuple = PHASES
    magnitude: float = 0.0
    """Relative amplitude (radians for CAP_BANK)"""
    freq_hz: float = 0.0
    damping: float = 0.0
    """1/seconds"""

    def __post_init__(self):
        if self.duration < 1 or self.t_start < 0:
            raise DataError('Event needs t_start >= 0 and duration >= 1, got {0}/{1}'.format(self.t_start, self.duration))
        if not self.phases or any(p not in PHASES for p in self.phases) or len(set(self.phases)) != len(self.phases):
            raise DataError('Event phases must be a non-empty subset of A, B, C; got {0}'.format(self.phases))
        if self.magnitude < 0 or self.damping < 0 or self.freq_hz < 0:
            raise DataError('Event magnitude, frequency and damping must be non-negative')

    @property
    def t_end(self) -> int:
        """Last affected sample index (inclusive)"""
        return self.t_start + self.duration - 1

    @property
    def phase_columns(self) -> list:
        return [PHASES.index(p) for p in self.phases]


@dataclass(frozen=True)
class GroundTruth:
    """
    Labeled events sorted by start; intervals are closed [t_start, t_end] and disjoint.
    """
    events: tuple = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.events)

    def intervals(self) -> list:
        return [(e.t_start, e.t_end) for e in self.events]

    def labeled_mask(self, length: int, first_index: int = 0) -> np.ndarray:
        mask = np.zeros(length, dtype=bool)
        for e in self.events:
            mask[max(e.t_start - first_index, 0):max(e.t_end + 1 - first_index, 0)] = True
        return mask


def generate_normal(cfg: FeederConfig) -> PhasorStream:
    """
    Generates an event-free stream, deterministic for a given seed.
    Current follows a slow sinusoidal load drift, voltage sags slightly with load; both carry Gaussian noise.
    """
    n = cfg.length
    rng = rng_for(cfg.seed)
    t = np.arange(n) / SAMPLE_RATE
    drift_phase = rng.uniform(0.0, 2.0 * np.pi)
    drift = (cfg.load_drift_depth * np.sin(2.0 * np.pi * t / cfg.load_drift_period_s + drift_phase))[:, None]
    base_i = np.asarray(cfg.base_i, dtype=float)[None, :]
    i_mag = np.maximum(base_i * (1.0 + drift + cfg.noise_i * rng.standard_normal((n, 3))), 0.0)
    v_mag = np.maximum(cfg.base_v * (1.0 - cfg.voltage_drift_ratio * drift + cfg.noise_v * rng.standard_normal((n, 3))), 0.0)
    v_ang = wrap_angle(PHASE_OFFSETS[None, :] + cfg.noise_ang * rng.standard_normal((n, 3)))
    i_ang = wrap_angle(v_ang - cfg.pf_base + cfg.noise_ang * rng.standard_normal((n, 3)))
    logger.debug('Generated {0} normal frames (seed {1})'.format(n, cfg.seed))
    return PhasorStream.from_arrays(np.arange(n), v_mag, v_ang, i_mag, i_ang)


def inject_event(stream: PhasorStream, spec: EventSpec) -> PhasorStream:
    """
    Returns a copy of the stream with one event applied inside [spec.t_start, spec.t_end] on the listed phases.
    :raise DataError: if the interval is outside the stream or the spec lacks a needed parameter
    """
    first = int(stream.ts[0]) if len(stream) else 0
    begin = spec.t_start - first
    end = begin + spec.duration
    if begin < 0 or end > len(stream):
        raise DataError('Event interval [{0}, {1}] is outside the stream'.format(spec.t_start, spec.t_end))
    if spec.kind.oscillatory and spec.freq_hz <= 0:
        raise DataError('Event kind {0} needs a positive frequency'.format(spec.kind.value))
    if spec.kind is EventKind.VOLTAGE_SAG and spec.magnitude >= 1:
        raise DataError('Voltage sag magnitude must be below 1, got {0}'.format(spec.magnitude))

    ch = stream.writable_channels()
    rows = slice(begin, end)
    cols = spec.phase_columns
    tau = (np.arange(spec.duration) / SAMPLE_RATE)[:, None]
    m = spec.magnitude
    kind = spec.kind

    if kind is EventKind.INRUSH:
        envelope = np.exp(-tau / (spec.duration / (5.0 * SAMPLE_RATE)))
        ch['i_mag'][rows, cols] *= 1.0 + m * envelope
        ch['v_mag'][rows, cols] *= 1.0 - INRUSH_VOLTAGE_COUPLING * m * envelope
    elif kind is EventKind.CAP_BANK:
        ch['i_ang'][rows, cols] = wrap_angle(ch['i_ang'][rows, cols] + m)
        ch['v_mag'][rows, cols] *= 1.0 + CAP_BANK_VOLTAGE_STEP * m
    elif kind is EventKind.IPQ_SMALL:
        # The active current component ramps up while the reactive one is held, so Q stays put.
        ramp = np.clip(np.arange(1, spec.duration + 1) / max(spec.duration / 2.0, 1.0), 0.0, 1.0)[:, None]
        i_ref = ch['i_mag'][begin, cols][None, :]
        pf_angle = wrap_angle(ch['v_ang'][rows, cols] - ch['i_ang'][rows, cols])
        active = ch['i_mag'][rows, cols] * np.cos(pf_angle) + m * i_ref * ramp
        reactive = ch['i_mag'][rows, cols] * np.sin(pf_angle)
        ch['i_mag'][rows, cols] = np.hypot(active, reactive)
        ch['i_ang'][rows, cols] = wrap_angle(ch['v_ang'][rows, cols] - np.arctan2(reactive, active))
    elif kind is EventKind.OSCILLATION:
        ch['i_mag'][rows, cols] *= 1.0 + m * np.sin(2.0 * np.pi * spec.freq_hz * tau)
    elif kind is EventKind.LONG_TRANSIENT:
        envelope = (0.6 + 0.4 * np.cos(2.0 * np.pi * 0.1 * tau)) * (1.0 + 0.3 * np.sin(2.0 * np.pi * 2.0 * tau))
        ch['i_mag'][rows, cols] *= 1.0 + m * envelope
    elif kind is EventKind.VOLTAGE_SAG:
        ch['v_mag'][rows, cols] *= 1.0 - m
    elif kind is EventKind.VOLTAGE_DAMPED_OSC:
        ch['v_mag'][rows, cols] *= 1.0 + m * np.sin(2.0 * np.pi * spec.freq_hz * tau) * np.exp(-spec.damping * tau)

    ch['i_mag'] = np.maximum(ch['i_mag'], 0.0)
    ch['v_mag'] = np.maximum(ch['v_mag'], 0.0)
    return stream.with_channels(**ch)


def check_disjoint(specs) -> list:
    """
    Sorts specs by start and verifies that no two intervals overlap.
    :raise DataError: on overlap
    """
    ordered = sorted(specs, key=lambda s: s.t_start)
    for prev, nxt in zip(ordered, ordered[1:]):
        if nxt.t_start <= prev.t_end:
            raise DataError('Overlapping events: [{0}, {1}] and [{2}, {3}]'
                            .format(prev.t_start, prev.t_end, nxt.t_start, nxt.t_end))
    return ordered


def build_corpus(cfg: FeederConfig, specs) -> tuple:
    """
    Builds a labeled corpus: a normal stream with every event injected.
    :return: (stream, GroundTruth)
    """
    ordered = check_disjoint(specs)
    logger.info('>> Building corpus: {0} s, {1} events'.format(cfg.duration_s, len(ordered)))
    stream = generate_normal(cfg)
    for spec in ordered:
        stream = inject_event(stream, spec)
    logger.info('<< Corpus built: {0} frames'.format(len(stream)))
    return stream, GroundTruth(tuple(ordered))


def truth_to_frame(truth: GroundTruth) -> pd.DataFrame:
    return pd.DataFrame({'kind': [e.kind.value for e in truth.events],
                         't_start': [e.t_start for e in truth.events],
                         't_end': [e.t_end for e in truth.events],
                         'phases': [''.join(e.phases) for e in truth.events],
                         'magnitude': [e.magnitude for e in truth.events]},
                        columns=['kind', 't_start', 't_end', 'phases', 'magnitude'])


def write_truth_csv(truth: GroundTruth, path_or_buf) -> None:
    truth_to_frame(truth).to_csv(path_or_buf, index=False, float_format='%.17g', lineterminator='\n')


def read_truth_csv(path_or_buf) -> GroundTruth:
    """
    Reads ground truth written by write_truth_csv. Oscillation parameters are not part of the file.
    """
    try:
        df = pd.read_csv(path_or_buf, dtype={'phases': str, 'kind': str}, float_precision='round_trip')
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise DataError('Malformed ground-truth CSV: {0}'.format(e))
    expected = ['kind', 't_start', 't_end', 'phases', 'magnitude']
    if list(df.columns) != expected:
        raise DataError('Ground-truth CSV schema mismatch: expected {0}'.format(','.join(expected)))
    try:
        events = [EventSpec(EventKind(row.kind), int(row.t_start), int(row.t_end) - int(row.t_start) + 1,
                            tuple(str(row.phases)), float(row.magnitude))
                  for row in df.itertuples(index=False)]
    except (ValueError, TypeError) as e:
        raise DataError('Invalid ground-truth row: {0}'.format(e))
    return GroundTruth(tuple(check_disjoint(events)))
