"""
Unsupervised event detection in micro-PMU data with GAN discriminators.

Commands:
    synth   - synthesize a feeder stream with labeled events
    train   - train the basic (one model) or enhanced (two models) detector on normal data
    detect  - score a stream with a trained detector or the MAD baseline
    eval    - compare detection reports against ground truth
"""
import logging
import os
import sys
from argparse import ArgumentParser, RawDescriptionHelpFormatter
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from detection.detector import (BasicDetector, DetectionReport, EnhancedDetector, ScoreDistribution, StreamingDetector,
                                fit_score_distribution, run_stream)
from detection.mad import MadDetector
from detection.model_file import load_model, save_model
from detection.report import read_report_csv, report_to_frame, write_intervals_csv, write_report_csv
from evaluation import comparison_frame, evaluate_report, format_summary, per_kind_frame, window_confusion
from gan.trainer import TrainConfig, prepare_training_blocks, train_gan, write_diagnostics_csv
from gen.feeder import build_corpus, read_truth_csv, write_truth_csv
from gen.generators import LEAD_IN_S, schedule_events, trace_contamination
from nn.network import discriminator_scores
from phasor.csvio import iter_stream_csv, read_stream_csv, write_stream_csv
from phasor.data import SAMPLE_RATE, FeatureSet, derive_feature_matrix
from util.conf import RunConfig, keys_help, parse_conf
from util.errors import ConfigError, DataError, NonConvergenceError
from util.randomization import rng_for

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NOT_CONVERGED = 4

MODES = {'basic': [FeatureSet.ALL12], 'enhanced': [FeatureSet.IPQ9, FeatureSet.V3]}
STDIN = '-'


def model_path(prefix: str, feature_set: FeatureSet) -> str:
    return '{0}.{1}.model'.format(prefix, feature_set.name.lower())


def diagnostics_path(prefix: str, feature_set: FeatureSet) -> str:
    return '{0}.{1}.diagnostics.csv'.format(prefix, feature_set.name.lower())


def cmd_synth(conf: RunConfig, out: str, truth_out: str, training: bool = False):
    """
    Builds a synthetic corpus.
    :param training: place trace contamination at synth.train_event_rate instead of synth.event_count events
    """
    feeder = conf.feeder_config()
    rng = rng_for(feeder.seed + 1)
    lead_in = int(LEAD_IN_S * SAMPLE_RATE)
    if training:
        specs = trace_contamination(feeder, conf['synth.train_event_rate'], rng, conf.min_gap, lead_in,
                                    conf['synth.events'])
    else:
        specs = schedule_events(conf.event_expressions, conf['synth.event_count'], feeder, rng, conf.min_gap, lead_in)
    stream, truth = build_corpus(feeder, specs)
    write_stream_csv(stream, out)
    write_truth_csv(truth, truth_out)
    print('{0} frames, {1} events'.format(len(stream), len(truth)))
    return stream, truth


def train_feature_set(features: np.ndarray, feature_set: FeatureSet, cfg: TrainConfig, size: int, stride: int):
    """
    Trains one model and fits its score distribution on the scores of all its training windows.
    :return: (TrainedGan, ScoreDistribution)
    """
    normalizer, blocks = prepare_training_blocks(features, feature_set, size, stride)
    gan = train_gan(blocks, cfg, normalizer, feature_set)
    return gan, fit_score_distribution(discriminator_scores(gan.discriminator, blocks))


def cmd_train(conf: RunConfig, train_csv: str, mode: str, prefix: str) -> list:
    """
    :return: paths of the written model files
    :raise NonConvergenceError: if a model failed its equilibrium check after all restarts
        (models and diagnostics are written anyway)
    """
    cfg = conf.train_config()
    feature_sets = MODES[mode]
    features = derive_feature_matrix(read_stream_csv(train_csv))
    args = [(features, fs, cfg, conf['window.size'], conf['window.stride']) for fs in feature_sets]
    if conf['train.parallel'] and len(args) > 1:
        logger.info('Training {0} models in parallel'.format(len(args)))
        with ProcessPoolExecutor(max_workers=len(args)) as executor:
            results = list(executor.map(train_feature_set, *zip(*args)))
    else:
        results = [train_feature_set(*a) for a in args]
    written = []
    failed = []
    for fs, (gan, dist) in zip(feature_sets, results):
        path = model_path(prefix, fs)
        save_model(path, gan, dist)
        write_diagnostics_csv(gan.diagnostics, diagnostics_path(prefix, fs))
        written.append(path)
        if not gan.converged:
            failed.append(diagnostics_path(prefix, fs))
        print('{0}: score mean={1:.6f} std={2:.6f}, restarts={3}, converged={4}'
              .format(path, dist.mean, dist.std, gan.diagnostics.restarts, gan.converged))
    if failed:
        raise NonConvergenceError('Equilibrium not reached after {0} restart(s); see {1}'
                                  .format(cfg.max_restarts, ', '.join(failed)))
    return written


def build_detector(conf: RunConfig, detector: str, model_files: list):
    cfg = conf.detector_config()
    if detector == 'mad':
        return MadDetector(conf.mad_config(), cfg)
    models = [load_model(path) for path in model_files]
    for gan, _ in models:
        if gan.window != cfg.size:
            raise DataError('Model was trained on windows of {0}, window.size is {1}'.format(gan.window, cfg.size))
    if detector == 'basic':
        if len(models) != 1:
            raise ConfigError('The basic detector takes exactly one model file')
        gan, dist = models[0]
        return BasicDetector(gan, dist, cfg)
    by_set = {gan.feature_set: (gan, dist) for gan, dist in models}
    if len(models) != 2 or set(by_set) != {FeatureSet.IPQ9, FeatureSet.V3}:
        raise DataError('feature set mismatch: the enhanced detector needs one IPQ9 and one V3 model, got {0}'
                        .format(', '.join(gan.feature_set.name for gan, _ in models) or 'none'))
    return EnhancedDetector(*by_set[FeatureSet.IPQ9], *by_set[FeatureSet.V3], cfg)


def _stream_detection(detector, chunksize: int, out) -> DetectionReport:
    """Scores stdin chunk by chunk, writing each window's row as soon as it is complete"""
    streaming = StreamingDetector(detector)
    header = True
    for chunk in iter_stream_csv(sys.stdin, chunksize):
        results = streaming.push_stream(chunk)
        if results or header:
            frame = report_to_frame(DetectionReport(detector.source, detector.cfg.size, results))
            frame.to_csv(out, index=False, header=header, float_format='%.17g', na_rep='', lineterminator='\n')
            out.flush()
            header = False
    if header:
        report_to_frame(streaming.report).to_csv(out, index=False, lineterminator='\n')
    return streaming.report


def cmd_detect(conf: RunConfig, test_csv: str, detector: str, model_files: list, out: str,
               intervals_out: str = None, chunksize: int = None) -> DetectionReport:
    """
    :param test_csv: stream CSV path, or "-" to read frames from stdin as they arrive
    :param chunksize: stdin rows per read; defaults to one stride
    """
    d = build_detector(conf, detector, model_files or [])
    if test_csv == STDIN:
        chunksize = chunksize or d.cfg.stride
        if out == STDIN:
            report = _stream_detection(d, chunksize, sys.stdout)
        else:
            with open(out, 'w', newline='') as f:
                report = _stream_detection(d, chunksize, f)
    else:
        report = run_stream(d, read_stream_csv(test_csv))
        write_report_csv(report, sys.stdout if out == STDIN else out)
    if intervals_out:
        write_intervals_csv(report.intervals, intervals_out)
    logger.info('{0} detector: {1} windows, flag rate {2:.4%}'.format(d.source, len(report.windows), report.flag_rate()))
    if detector != 'mad':
        logger.info('Nominal flag rate per score at z_p={0:g}: {1:.4%}'
                    .format(d.cfg.z_p, ScoreDistribution.nominal_flag_rate(d.cfg.z_p)))
    return report


def cmd_eval(conf: RunConfig, truth_csv: str, report_csvs: list, out: str = None, per_kind_out: str = None):
    """
    :return: (comparison table, per-kind recall table)
    """
    truth = read_truth_csv(truth_csv)
    results = {}
    matches = {}
    for path in report_csvs:
        report = read_report_csv(path, conf['window.size'], os.path.basename(path))
        name = report.source
        if name in results:
            name = '{0} ({1})'.format(name, os.path.basename(path))
        matches[name], results[name] = evaluate_report(report, truth, conf['eval.slack'])
        logger.info('{0}: window-level {1}'.format(name, window_confusion(report, truth)))
    comparison = comparison_frame(results)
    per_kind = per_kind_frame(matches)
    if out:
        comparison.to_csv(out, index=False, float_format='%.6f', lineterminator='\n')
    if per_kind_out:
        per_kind.to_csv(per_kind_out, float_format='%.6f', lineterminator='\n')
    print(format_summary(comparison, per_kind))
    return comparison, per_kind


def create_parser() -> ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument('-c', '--config', type=str, help='json configuration file (optional)')
    common.add_argument('--set', type=str, action='append', default=[], metavar='KEY=VALUE',
                        help='overrides one configuration key; may be repeated')
    common.add_argument('-v', '--verbose', action='store_true', help='debug logging')

    parser = ArgumentParser(description='Unsupervised event detection in micro-PMU data.', epilog=keys_help(),
                            formatter_class=RawDescriptionHelpFormatter)
    subparsers = parser.add_subparsers(dest='command', metavar='command')
    subparsers.required = True

    def add(name: str, help_text: str) -> ArgumentParser:
        return subparsers.add_parser(name, help=help_text, description=help_text, epilog=keys_help(),
                                     formatter_class=RawDescriptionHelpFormatter, parents=[common])

    synth = add('synth', 'Synthesize a feeder stream with labeled events.')
    synth.add_argument('-o', '--out', required=True, help='stream CSV to write')
    synth.add_argument('-t', '--truth', required=True, help='ground-truth CSV to write')
    synth.add_argument('--training', action='store_true',
                       help='training corpus: events only at synth.train_event_rate')

    train = add('train', 'Train a detector on (mostly) normal data.')
    train.add_argument('-i', '--input', required=True, help='training stream CSV')
    train.add_argument('-m', '--mode', choices=sorted(MODES), default='basic')
    train.add_argument('-o', '--out', required=True,
                       help='output prefix; writes <prefix>.<feature set>.model and .diagnostics.csv')

    detect = add('detect', 'Score a stream and flag events.')
    detect.add_argument('-i', '--input', required=True, help='test stream CSV, or - to stream from stdin')
    detect.add_argument('-d', '--detector', choices=['basic', 'enhanced', 'mad'], default='basic')
    detect.add_argument('--model', action='append', default=[], help='model file; repeat for enhanced')
    detect.add_argument('-o', '--out', default=STDIN, help='per-window report CSV (default: stdout)')
    detect.add_argument('--intervals', help='merged intervals CSV to write (optional)')
    detect.add_argument('--chunk', type=int, help='rows per stdin read (default: window.stride)')

    evaluate = add('eval', 'Compare detection reports against ground truth.')
    evaluate.add_argument('-t', '--truth', required=True, help='ground-truth CSV')
    evaluate.add_argument('reports', nargs='+', help='per-window report CSVs')
    evaluate.add_argument('-o', '--out', help='comparison table CSV to write (optional)')
    evaluate.add_argument('--per-kind', help='per-kind recall CSV to write (optional)')
    return parser


def run(argv: list = None) -> int:
    """
    Runs the program for the given (or command line) arguments.
    :return: exit code
    """
    args = create_parser().parse_args(argv)
    logging.getLogger().setLevel(logging.DEBUG if args.verbose else logging.INFO)
    try:
        conf = parse_conf(args.config, args.set)
        if args.command == 'synth':
            cmd_synth(conf, args.out, args.truth, args.training)
        elif args.command == 'train':
            cmd_train(conf, args.input, args.mode, args.out)
        elif args.command == 'detect':
            cmd_detect(conf, args.input, args.detector, args.model, args.out, args.intervals, args.chunk)
        else:
            cmd_eval(conf, args.truth, args.reports, args.out, args.per_kind)
    except ConfigError as e:
        logger.error('Configuration error: {0}'.format(e))
        return EXIT_CONFIG
    except (DataError, OSError) as e:
        logger.error('Data error: {0}'.format(e))
        return EXIT_DATA
    except NonConvergenceError as e:
        logger.error(str(e))
        return EXIT_NOT_CONVERGED
    return EXIT_OK


if __name__ == "__main__":
    logging.basicConfig(format='%(asctime)s - %(levelname)s - %(message)s', level=logging.INFO)
    sys.exit(run())
