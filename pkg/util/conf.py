"""
Contains code related to program configuration.
See readme for more information.

A configuration is a flat set of dotted keys ("train.iterations"). Values come from the defaults below, then
from a JSON file, then from command line overrides ("key=value"), each layer replacing the previous one.
"""
import json
from dataclasses import dataclass
from typing import Any, Callable

from detection.detector import DetectorConfig
from detection.mad import MadConfig
from gan.trainer import NoiseSpec, TrainConfig
from gen.feeder import FeederConfig
from gen.generators import DEFAULT_EXPRESSIONS, parse_expressions
from phasor.data import FEATURE_NAMES, SAMPLE_RATE, FeatureSet
from util.errors import ConfigError


def _bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ('true', '1', 'yes', 'on'):
        return True
    if text in ('false', '0', 'no', 'off'):
        return False
    raise ValueError('expected true or false, got "{0}"'.format(value))


def _int(value) -> int:
    if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
        raise ValueError('expected an integer, got {0}'.format(value))
    return int(value)


def _float(value) -> float:
    if isinstance(value, bool):
        raise ValueError('expected a number, got {0}'.format(value))
    return float(value)


def _floats(value) -> tuple:
    items = value if isinstance(value, (list, tuple)) else str(value).split(',')
    return tuple(_float(x) for x in items)


def _ints(value) -> tuple:
    items = value if isinstance(value, (list, tuple)) else str(value).split(',')
    return tuple(_int(x) for x in items)


def _features(value) -> tuple:
    """"all", a feature set name (V3, IPQ9, ALL12) or comma-separated feature names"""
    text = ','.join(value) if isinstance(value, (list, tuple)) else str(value).strip()
    if text.lower() == 'all':
        return FEATURE_NAMES
    if text.upper() in FeatureSet.__members__:
        return tuple(FEATURE_NAMES[c] for c in FeatureSet[text.upper()].columns)
    names = tuple(x.strip() for x in text.split(',') if x.strip())
    unknown = [n for n in names if n not in FEATURE_NAMES]
    if unknown or not names:
        raise ValueError('unknown feature(s) {0}'.format(', '.join(unknown) or '(none)'))
    return names


def _expressions(value) -> str:
    text = str(value)
    if not parse_expressions(text):
        raise ValueError('no event expressions')
    return text


@dataclass(frozen=True)
class ConfigKey:
    name: str
    default: Any
    parse: Callable
    help: str


KEYS = {k.name: k for k in [
    ConfigKey('feeder.seed', 7, _int, 'seed of the simulated feeder noise and drift'),
    ConfigKey('feeder.duration_s', 3600.0, _float, 'length of a synthesized stream in seconds'),
    ConfigKey('feeder.base_v', 7200.0, _float, 'nominal voltage magnitude'),
    ConfigKey('feeder.base_i', (100.0, 90.0, 110.0), _floats, 'nominal current magnitude per phase (A,B,C)'),
    ConfigKey('feeder.noise_v', 0.0005, _float, 'relative voltage magnitude noise std'),
    ConfigKey('feeder.noise_i', 0.004, _float, 'relative current magnitude noise std'),
    ConfigKey('feeder.noise_ang', 0.002, _float, 'angle noise std in radians'),
    ConfigKey('feeder.load_drift_period_s', 600.0, _float, 'period of the slow load drift'),
    ConfigKey('feeder.load_drift_depth', 0.05, _float, 'relative depth of the load drift'),
    ConfigKey('feeder.voltage_drift_ratio', 0.1, _float, 'voltage drop per unit of relative load drift'),
    ConfigKey('feeder.pf_base', 0.3, _float, 'power-factor angle in radians'),
    ConfigKey('synth.events', DEFAULT_EXPRESSIONS, _expressions, 'semicolon-separated event generator expressions'),
    ConfigKey('synth.event_count', 210, _int, 'number of events in a labeled corpus'),
    ConfigKey('synth.min_gap_s', 3.0, _float, 'minimum clean gap between events in seconds'),
    ConfigKey('synth.train_event_rate', 0.0, _float, 'fraction of samples covered by events in training corpora'),
    ConfigKey('window.size', 40, _int, 'samples per window'),
    ConfigKey('window.stride', 20, _int, 'samples between window starts'),
    ConfigKey('train.batch_size', 64, _int, 'windows per training batch'),
    ConfigKey('train.iterations', 2000, _int, 'training iterations per attempt'),
    ConfigKey('train.d_steps', 1, _int, 'discriminator updates per iteration'),
    ConfigKey('train.g_steps', 1, _int, 'generator updates per iteration'),
    ConfigKey('train.seed', 11, _int, 'training seed; restarts derive their own seeds from it'),
    ConfigKey('train.noise_mu', 0.0, _float, 'mean of the generator noise'),
    ConfigKey('train.noise_sigma', 1.0, _float, 'std of the generator noise'),
    ConfigKey('train.noise_dim', 8, _int, 'noise values per time step'),
    ConfigKey('train.equilibrium_eps', 0.15, _float, 'allowed distance of mean scores from 1/2'),
    ConfigKey('train.max_restarts', 3, _int, 'restarts after a failed equilibrium check'),
    ConfigKey('train.non_saturating', False, _bool, 'use -log D(G(z)) as the generator loss'),
    ConfigKey('train.lr_d', 2e-4, _float, 'discriminator learning rate'),
    ConfigKey('train.lr_g', 1e-3, _float, 'generator learning rate'),
    ConfigKey('train.d_hidden', (32, 16), _ints, 'discriminator LSTM layer sizes'),
    ConfigKey('train.g_hidden', (32, 32), _ints, 'generator LSTM layer sizes'),
    ConfigKey('train.holdout_fraction', 0.1, _float, 'share of training windows held out for the equilibrium check'),
    ConfigKey('train.trace_every', 10, _int, 'iterations between diagnostics rows'),
    ConfigKey('train.check_every', 100, _int, 'iterations between in-training equilibrium checks (0: end only)'),
    ConfigKey('train.min_iterations', 300, _int, 'iterations before an equilibrium check may end an attempt'),
    ConfigKey('train.parallel', False, _bool, 'train the two enhanced-mode models in parallel processes'),
    ConfigKey('detector.z_p', 3.0, _float, 'flagging threshold in standard deviations'),
    ConfigKey('mad.coarse_window', 480, _int, 'coarse trailing window of the MAD baseline'),
    ConfigKey('mad.fine_window', 120, _int, 'fine trailing window of the MAD baseline'),
    ConfigKey('mad.k', 5.0, _float, 'threshold in scaled MADs'),
    ConfigKey('mad.mad_scale', 1.4826, _float, 'MAD to standard deviation factor'),
    ConfigKey('mad.features', FEATURE_NAMES, _features, 'monitored features: all, V3, IPQ9 or a list of names'),
    ConfigKey('eval.slack', 40, _int, 'samples of tolerance around ground-truth events'),
]}


def _format_default(value) -> str:
    if isinstance(value, tuple):
        return ','.join(str(v) for v in value) if value != FEATURE_NAMES else 'all'
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, str) and len(value) > 40:
        return 'all kinds, both tiers'
    return str(value)


def keys_help() -> str:
    """Table of all configuration keys and their defaults"""
    width = max(len(name) for name in KEYS)
    lines = ['configuration keys (--set key=value or a JSON file of "key": value pairs):']
    for key in KEYS.values():
        lines.append('  {0:<{1}}  {2} (default: {3})'.format(key.name, width, key.help, _format_default(key.default)))
    return '\n'.join(lines)


class RunConfig:
    """
    Validated configuration values for one run, and the module configurations built from them.
    """

    def __init__(self, values: dict = None) -> None:
        self.values = {name: key.default for name, key in KEYS.items()}
        for name, value in (values or {}).items():
            self.set(name, value)

    def set(self, name: str, value) -> None:
        if name not in KEYS:
            raise ConfigError('Unknown configuration key: {0}'.format(name))
        try:
            self.values[name] = KEYS[name].parse(value)
        except (TypeError, ValueError) as e:
            raise ConfigError('{0}: {1}'.format(name, e))

    def __getitem__(self, name: str):
        return self.values[name]

    def feeder_config(self) -> FeederConfig:
        return FeederConfig(seed=self['feeder.seed'], duration_s=self['feeder.duration_s'],
                            base_v=self['feeder.base_v'], base_i=self['feeder.base_i'],
                            noise_v=self['feeder.noise_v'], noise_i=self['feeder.noise_i'],
                            noise_ang=self['feeder.noise_ang'], load_drift_period_s=self['feeder.load_drift_period_s'],
                            load_drift_depth=self['feeder.load_drift_depth'],
                            voltage_drift_ratio=self['feeder.voltage_drift_ratio'], pf_base=self['feeder.pf_base'])

    def train_config(self) -> TrainConfig:
        return TrainConfig(batch_size=self['train.batch_size'], iterations=self['train.iterations'],
                           d_steps_per_iter=self['train.d_steps'], g_steps_per_iter=self['train.g_steps'],
                           seed=self['train.seed'],
                           noise=NoiseSpec(self['train.noise_mu'], self['train.noise_sigma'], self['train.noise_dim']),
                           equilibrium_eps=self['train.equilibrium_eps'], max_restarts=self['train.max_restarts'],
                           non_saturating_g_loss=self['train.non_saturating'],
                           lr_d=self['train.lr_d'], lr_g=self['train.lr_g'],
                           d_hidden=self['train.d_hidden'], g_hidden=self['train.g_hidden'],
                           holdout_fraction=self['train.holdout_fraction'], trace_every=self['train.trace_every'],
                           check_every=self['train.check_every'], min_iterations=self['train.min_iterations'])

    def detector_config(self) -> DetectorConfig:
        return DetectorConfig(self['detector.z_p'], self['window.size'], self['window.stride'])

    def mad_config(self) -> MadConfig:
        return MadConfig(self['mad.coarse_window'], self['mad.fine_window'], self['mad.k'], self['mad.mad_scale'],
                         self['mad.features'])

    @property
    def event_expressions(self) -> list:
        return parse_expressions(self['synth.events'])

    @property
    def min_gap(self) -> int:
        """Minimum gap between events in samples"""
        return int(round(self['synth.min_gap_s'] * SAMPLE_RATE))


def parse_override(text: str) -> tuple:
    name, sep, value = text.partition('=')
    if not sep or not name.strip():
        raise ConfigError('Override must look like key=value, got "{0}"'.format(text))
    return name.strip(), value.strip()


def parse_conf(filename: str, overrides: list = None) -> RunConfig:
    """
    Parses the configuration.
    :param filename: name of a JSON file holding an object of dotted keys (optional - may be None)
    :param overrides: "key=value" strings applied after the file, in order (optional)
    :return: a RunConfig object
    """
    conf = RunConfig()
    if filename:
        try:
            with open(filename) as conf_file:
                file_values = json.load(conf_file)
        except OSError as e:
            raise ConfigError('Cannot read configuration file {0}: {1}'.format(filename, e))
        except json.JSONDecodeError as e:
            raise ConfigError('Invalid JSON in {0}: {1}'.format(filename, e))
        if not isinstance(file_values, dict):
            raise ConfigError('Configuration file {0} must hold a JSON object'.format(filename))
        for name, value in file_values.items():
            conf.set(name, value)
    for text in overrides or []:
        conf.set(*parse_override(text))
    return conf
