#!/usr/bin/env python
"""
Event generator expressions.
An expression such as `voltage_sag --tier small --phases A` is parsed into an EventSpec; anything not given
explicitly is drawn from the kind's defaults and the magnitude tier.
May be used as standalone script or from other scripts through the generate() function.
See generators.py -h for options.
"""
import logging
import shlex
import sys
from argparse import ArgumentParser
from dataclasses import replace

import numpy as np

from gen.feeder import EventKind, EventSpec, FeederConfig
from phasor.data import SAMPLE_RATE
from util import randomization
from util.errors import ConfigError

logger = logging.getLogger(__name__)

TIERS = {'small': (1.0, 3.0), 'large': (10.0, 20.0)}
"""Magnitude tiers as multiples of the affected channel's noise standard deviation"""

# Default durations in seconds per kind
DURATIONS_S = {
    EventKind.INRUSH: (0.5, 2.0),
    EventKind.CAP_BANK: (1.0, 3.0),
    EventKind.IPQ_SMALL: (1.0, 4.0),
    EventKind.OSCILLATION: (0.5, 2.0),
    EventKind.LONG_TRANSIENT: (20.0, 25.0),
    EventKind.VOLTAGE_SAG: (0.5, 3.0),
    EventKind.VOLTAGE_DAMPED_OSC: (0.5, 2.0),
}
FREQS_HZ = {EventKind.OSCILLATION: (2.0, 8.0), EventKind.VOLTAGE_DAMPED_OSC: (3.0, 10.0)}
DAMPING = (1.0, 4.0)
LEAD_IN_S = 10.0
"""Start of a corpus kept free of events"""

DEFAULT_EXPRESSIONS = ';'.join('{0} --tier {1}'.format(kind.value, tier) for tier in ('small', 'large') for kind in EventKind)


class _Parser(ArgumentParser):
    """Raises ConfigError instead of exiting"""

    def error(self, message):
        raise ConfigError('Invalid event expression: {0}'.format(message))


def generate(arguments: list, feeder: FeederConfig = FeederConfig(), rng: np.random.Generator = None,
             t_start: int = 0) -> EventSpec:
    """
    Evaluates one generator expression.
    :param arguments: the expression split into words, e.g. ['oscillation', '--tier', 'large']
    :param feeder: feeder whose noise levels scale the magnitude tiers
    :param rng: random generator for the unspecified fields
    :param t_start: start index of the event
    """
    parser = create_parser()
    args = parser.parse_args(arguments)
    rng = rng if rng is not None else randomization.rng_for(feeder.seed)
    return _make_spec(EventKind(args.gen_name), args, feeder, rng, t_start)


def create_parser() -> ArgumentParser:
    parser = _Parser(description='Generate an event specification using a generator expression')
    subparsers = parser.add_subparsers(help='event kind, see <kind> -h for more options', dest='gen_name')
    subparsers.required = True
    helps = {
        EventKind.INRUSH: 'current spike decaying exponentially',
        EventKind.CAP_BANK: 'capacitor bank switching (power-factor step)',
        EventKind.IPQ_SMALL: 'small active-current ramp, visible in I and P only',
        EventKind.OSCILLATION: 'oscillation on the current magnitude',
        EventKind.LONG_TRANSIENT: 'long transient with a step at onset',
        EventKind.VOLTAGE_SAG: 'voltage-only dip',
        EventKind.VOLTAGE_DAMPED_OSC: 'damped oscillation in voltage only',
    }
    for kind in EventKind:
        sub = subparsers.add_parser(kind.value, help=helps[kind])
        sub.add_argument('--tier', choices=sorted(TIERS), default='small', help='magnitude tier (default: small)')
        sub.add_argument('--magnitude', type=float, help='relative amplitude; overrides the tier')
        sub.add_argument('--duration-s', type=float, dest='duration_s', help='duration in seconds')
        sub.add_argument('--phases', type=str, default='random', help='affected phases, e.g. A or BC (default: random)')
        if kind.oscillatory:
            sub.add_argument('--freq', type=float, dest='freq_hz', help='oscillation frequency in Hz')
        if kind is EventKind.VOLTAGE_DAMPED_OSC:
            sub.add_argument('--damping', type=float, help='envelope decay rate, 1/s')
    return parser


def channel_noise(kind: EventKind, feeder: FeederConfig) -> float:
    """Noise standard deviation of the channel an event kind acts on"""
    if kind.voltage_only:
        return feeder.noise_v
    if kind is EventKind.CAP_BANK:
        return feeder.noise_ang
    return feeder.noise_i


def _make_spec(kind: EventKind, args, feeder: FeederConfig, rng: np.random.Generator, t_start: int) -> EventSpec:
    if args.magnitude is not None:
        magnitude = args.magnitude
    else:
        low, high = TIERS[args.tier]
        magnitude = randomization.uniform_between(rng, low, high) * channel_noise(kind, feeder)
    duration_s = args.duration_s if args.duration_s is not None else randomization.uniform_between(rng, *DURATIONS_S[kind])
    if args.phases == 'random':
        phases = randomization.random_phases(rng)
    else:
        phases = tuple(args.phases.upper())
    freq_hz = 0.0
    if kind.oscillatory:
        freq_hz = args.freq_hz if args.freq_hz is not None else randomization.uniform_between(rng, *FREQS_HZ[kind])
    damping = 0.0
    if kind is EventKind.VOLTAGE_DAMPED_OSC:
        damping = args.damping if args.damping is not None else randomization.uniform_between(rng, *DAMPING)
    try:
        return EventSpec(kind, t_start, max(int(round(duration_s * SAMPLE_RATE)), 1), phases, magnitude, freq_hz, damping)
    except ValueError as e:
        raise ConfigError('Invalid event expression for {0}: {1}'.format(kind.value, e))


def parse_expressions(expressions: str) -> list:
    """Splits a semicolon-separated list of expressions into argument lists"""
    return [shlex.split(expr) for expr in expressions.split(';') if expr.strip()]


def schedule_events(expressions: list, count: int, feeder: FeederConfig, rng: np.random.Generator,
                    min_gap: int, lead_in: int) -> list:
    """
    Places `count` non-overlapping events in a stream of feeder.length frames, cycling through the expressions
    in random order. Consecutive events are at least min_gap samples apart; the first lead_in samples stay clean.
    :raise ConfigError: if the events cannot fit into the stream
    """
    if count <= 0:
        return []
    if not expressions:
        raise ConfigError('No event expressions given')
    specs = [generate(expressions[k % len(expressions)], feeder, rng) for k in range(count)]
    specs = [specs[k] for k in rng.permutation(count)]
    slack = feeder.length - lead_in - sum(s.duration for s in specs) - count * min_gap
    if slack < 0:
        raise ConfigError('{0} events do not fit into {1} s of data'.format(count, feeder.duration_s))
    weights = rng.random(count + 1)
    gaps = np.floor(slack * weights / weights.sum()).astype(int)
    placed = []
    position = lead_in
    for spec, gap in zip(specs, gaps):
        position += int(gap)
        placed.append(replace(spec, t_start=position))
        position += spec.duration + min_gap
    return placed


def trace_contamination(feeder: FeederConfig, rate: float, rng: np.random.Generator, min_gap: int, lead_in: int,
                        expressions: str = DEFAULT_EXPRESSIONS) -> list:
    """
    Events covering roughly `rate` of the samples, for training corpora that mirror real data's rare events.
    """
    if rate <= 0:
        return []
    parsed = parse_expressions(expressions)
    budget = rate * feeder.length
    mean_duration = np.mean([generate(expr, feeder, rng).duration for expr in parsed])
    count = max(int(round(budget / mean_duration)), 1)
    logger.debug('Contaminating training corpus with {0} events (rate {1})'.format(count, rate))
    return schedule_events(parsed, count, feeder, rng, min_gap, lead_in)


if __name__ == "__main__":
    logging.basicConfig(format='%(asctime)s - %(levelname)s - %(message)s', level=logging.DEBUG)
    print(generate(sys.argv[1:]))
