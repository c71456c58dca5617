"""
Model files: a trained GAN pair plus what a detector needs to use it.

Layout (text, one item per line):

    PMUGAN v1
    feature_set <ALL12|V3|IPQ9>
    window <W>
    <discriminator network>
    <generator network>
    normalizer <F>, lo, hi
    score_distribution <mean> <std>
    converged <0|1>
    restarts <count>
    non_saturating <0|1>
    end
"""
import logging

from detection.detector import ScoreDistribution
from gan.trainer import TrainedGan, TrainingDiagnostics
from nn.serialization import HEADER, LineReader, format_array, format_network, format_values, parse_array, parse_network
from phasor.data import FeatureSet, Normalizer
from util.errors import DataError

logger = logging.getLogger(__name__)


def format_model(gan: TrainedGan, dist: ScoreDistribution) -> str:
    lines = [HEADER,
             'feature_set {0}'.format(gan.feature_set.name),
             'window {0}'.format(gan.window)]
    lines.extend(format_network('discriminator', gan.discriminator))
    lines.extend(format_network('generator', gan.generator))
    lines.append('normalizer {0}'.format(gan.normalizer.width))
    lines.extend(format_array('lo', gan.normalizer.lo))
    lines.extend(format_array('hi', gan.normalizer.hi))
    lines.append('score_distribution ' + format_values([dist.mean, dist.std]))
    lines.append('converged {0}'.format(int(gan.diagnostics.converged)))
    lines.append('restarts {0}'.format(gan.diagnostics.restarts))
    lines.append('non_saturating {0}'.format(int(gan.diagnostics.non_saturating)))
    lines.append('end')
    return '\n'.join(lines) + '\n'


def _single(reader: LineReader, keyword: str) -> str:
    fields = reader.expect(keyword)
    if len(fields) != 1:
        raise DataError('Model file line {0}: "{1}" takes one value'.format(reader.pos, keyword))
    return fields[0]


def parse_model(text: str):
    """
    :return: (TrainedGan, ScoreDistribution)
    """
    reader = LineReader(text.splitlines())
    if reader.next_line().strip() != HEADER:
        raise DataError('Not a model file (expected header "{0}")'.format(HEADER))
    try:
        feature_set = FeatureSet[_single(reader, 'feature_set')]
    except KeyError as e:
        raise DataError('Model file: unknown feature set {0}'.format(e))
    try:
        window = int(_single(reader, 'window'))
        discriminator = parse_network(reader, 'discriminator')
        generator = parse_network(reader, 'generator')
        width = int(_single(reader, 'normalizer'))
        normalizer = Normalizer(parse_array(reader, 'lo'), parse_array(reader, 'hi'))
        mean, std = (float(x) for x in reader.expect('score_distribution'))
        diagnostics = TrainingDiagnostics(converged=_single(reader, 'converged') == '1',
                                          restarts=int(_single(reader, 'restarts')),
                                          non_saturating=_single(reader, 'non_saturating') == '1')
    except ValueError as e:
        if isinstance(e, DataError):
            raise
        raise DataError('Model file line {0}: {1}'.format(reader.pos, e))
    reader.expect('end')
    if width != feature_set.width or normalizer.width != width or discriminator.input_dim != width \
            or generator.output_dim != width:
        raise DataError('Model file: layer widths do not match feature set {0}'.format(feature_set.name))
    gan = TrainedGan(discriminator, generator, normalizer, feature_set, window, diagnostics)
    return gan, ScoreDistribution(mean, std)


def save_model(path: str, gan: TrainedGan, dist: ScoreDistribution) -> None:
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(format_model(gan, dist))
    logger.info('Wrote {0} model to {1}'.format(gan.feature_set.name, path))


def load_model(path: str):
    """
    :return: (TrainedGan, ScoreDistribution)
    """
    with open(path, encoding='utf-8') as f:
        return parse_model(f.read())
