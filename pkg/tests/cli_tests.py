import io
import json
import os
import shutil
import tempfile
import time
import unittest
from concurrent.futures import ThreadPoolExecutor
from unittest import mock

import numpy as np
import pandas as pd

import pmu_gan
from detection.report import read_intervals_csv, read_report_csv
from phasor.csvio import read_stream_csv, write_stream_csv
from phasor.data import PhasorStream

CORPUS = ['--set', 'feeder.duration_s=60', '--set', 'synth.events=inrush --tier large;voltage_sag --tier large',
          '--set', 'synth.event_count=4', '--set', 'synth.min_gap_s=1']
TINY_TRAINING = ['--set', 'train.iterations=4', '--set', 'train.batch_size=8', '--set', 'train.d_hidden=4',
                 '--set', 'train.g_hidden=4', '--set', 'train.noise_dim=2', '--set', 'train.trace_every=2',
                 '--set', 'train.max_restarts=0', '--set', 'train.equilibrium_eps=0.49']
MAD = ['--set', 'mad.coarse_window=60', '--set', 'mad.fine_window=20']


class CliTest(unittest.TestCase):
    """
    End-to-end tests of the command line program on small corpora
    """

    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.mkdtemp()
        cls.test_csv = cls.path('test.csv')
        cls.truth_csv = cls.path('truth.csv')
        cls.train_csv = cls.path('train.csv')
        assert pmu_gan.run(['synth', '-o', cls.test_csv, '-t', cls.truth_csv] + CORPUS) == pmu_gan.EXIT_OK
        assert pmu_gan.run(['synth', '--training', '-o', cls.train_csv, '-t', cls.path('train_truth.csv'),
                            '--set', 'feeder.duration_s=20', '--set', 'feeder.seed=9']) == pmu_gan.EXIT_OK

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmp)

    @classmethod
    def path(cls, name: str) -> str:
        return os.path.join(cls.tmp, name)

    def train(self, mode: str, prefix: str) -> int:
        return pmu_gan.run(['train', '-i', self.train_csv, '-m', mode, '-o', self.path(prefix)] + TINY_TRAINING)

    def test_synth_outputs(self):
        self.assertEqual(len(read_stream_csv(self.test_csv)), 60 * 120)
        truth = pd.read_csv(self.truth_csv)
        self.assertEqual(len(truth), 4)
        self.assertTrue(np.all(truth['t_start'] >= 10 * 120))
        self.assertEqual(len(pd.read_csv(self.path('train_truth.csv'))), 0)

    def test_configuration_errors(self):
        self.assertEqual(pmu_gan.run(['synth', '-o', self.path('x.csv'), '-t', self.path('y.csv'),
                                      '--set', 'train.iteration=5']), pmu_gan.EXIT_CONFIG)
        self.assertEqual(pmu_gan.run(['detect', '-i', self.test_csv, '-d', 'mad', '--set', 'window.stride=0']),
                         pmu_gan.EXIT_CONFIG)
        bad_conf = self.path('bad.json')
        with open(bad_conf, 'w') as f:
            f.write('{')
        self.assertEqual(pmu_gan.run(['synth', '-c', bad_conf, '-o', self.path('x.csv'), '-t', self.path('y.csv')]),
                         pmu_gan.EXIT_CONFIG)

    def test_data_errors(self):
        self.assertEqual(pmu_gan.run(['eval', '-t', self.path('missing.csv'), self.test_csv]), pmu_gan.EXIT_DATA)
        self.assertEqual(pmu_gan.run(['detect', '-i', self.path('missing.csv'), '-d', 'mad']), pmu_gan.EXIT_DATA)
        self.assertEqual(pmu_gan.run(['detect', '-i', self.test_csv, '-d', 'basic',
                                      '--model', self.path('missing.model')]), pmu_gan.EXIT_DATA)

    def test_mad_detect_and_eval(self):
        report_csv = self.path('mad_report.csv')
        intervals_csv = self.path('mad_intervals.csv')
        code = pmu_gan.run(['detect', '-i', self.test_csv, '-d', 'mad', '-o', report_csv,
                            '--intervals', intervals_csv] + MAD)
        self.assertEqual(code, pmu_gan.EXIT_OK)
        report = read_report_csv(report_csv)
        self.assertEqual(report.source, 'mad')
        self.assertEqual(len(report.windows), (60 * 120 - 40) // 20 + 1)
        self.assertEqual(read_intervals_csv(intervals_csv), report.intervals)

        comparison_csv = self.path('comparison.csv')
        per_kind_csv = self.path('per_kind.csv')
        code = pmu_gan.run(['eval', '-t', self.truth_csv, report_csv, report_csv, '-o', comparison_csv,
                            '--per-kind', per_kind_csv])
        self.assertEqual(code, pmu_gan.EXIT_OK)
        comparison = pd.read_csv(comparison_csv)
        self.assertEqual(comparison['detector'].tolist(), ['mad', 'mad (mad_report.csv)'])
        self.assertTrue(comparison['recall'].between(0.0, 1.0).all())
        self.assertEqual(set(pd.read_csv(per_kind_csv)['kind']), {'inrush', 'voltage_sag'})

    def test_empty_stream(self):
        empty_csv = self.path('empty.csv')
        write_stream_csv(PhasorStream.empty(), empty_csv)
        report_csv = self.path('empty_report.csv')
        self.assertEqual(pmu_gan.run(['detect', '-i', empty_csv, '-d', 'mad', '-o', report_csv]), pmu_gan.EXIT_OK)
        self.assertEqual(read_report_csv(report_csv, source='mad').windows, [])

    def test_stdin_matches_file(self):
        file_report = self.path('file_report.csv')
        stdin_report = self.path('stdin_report.csv')
        self.assertEqual(pmu_gan.run(['detect', '-i', self.test_csv, '-d', 'mad', '-o', file_report] + MAD),
                         pmu_gan.EXIT_OK)
        with open(self.test_csv) as f:
            text = f.read()
        with mock.patch('sys.stdin', io.StringIO(text)):
            code = pmu_gan.run(['detect', '-i', '-', '-d', 'mad', '-o', stdin_report, '--chunk', '333'] + MAD)
        self.assertEqual(code, pmu_gan.EXIT_OK)
        a, b = read_report_csv(file_report), read_report_csv(stdin_report)
        self.assertEqual(a.starts.tolist(), b.starts.tolist())
        self.assertEqual(a.flags.tolist(), b.flags.tolist())

    def test_stdin_rows_written_while_input_open(self):
        report_csv = self.path('live_report.csv')
        with open(self.test_csv) as f:
            lines = f.readlines()
        read_fd, write_fd = os.pipe()
        with open(read_fd) as stdin, mock.patch('sys.stdin', stdin), ThreadPoolExecutor(max_workers=1) as executor:
            with open(write_fd, 'w') as feed:
                running = executor.submit(pmu_gan.run, ['detect', '-i', '-', '-d', 'mad', '-o', report_csv] + MAD)
                feed.write(''.join(lines[:201]))
                feed.flush()
                rows = []
                deadline = time.monotonic() + 30
                while len(rows) < 9 and time.monotonic() < deadline and not running.done():
                    time.sleep(0.05)
                    if os.path.exists(report_csv):
                        with open(report_csv) as f:
                            rows = f.read().split('\n')[1:-1]
                self.assertFalse(running.done())
                self.assertEqual([int(row.split(',')[0]) for row in rows], list(range(0, 161, 20)))
            self.assertEqual(running.result(timeout=30), pmu_gan.EXIT_OK)
        self.assertEqual(len(read_report_csv(report_csv).windows), 9)

    def test_basic_train_and_detect(self):
        self.assertEqual(self.train('basic', 'basic'), pmu_gan.EXIT_OK)
        model = self.path('basic.all12.model')
        self.assertTrue(os.path.exists(model))
        self.assertTrue(os.path.exists(self.path('basic.all12.diagnostics.csv')))
        self.assertEqual(self.train('basic', 'again'), pmu_gan.EXIT_OK)
        with open(model) as a, open(self.path('again.all12.model')) as b:
            self.assertEqual(a.read(), b.read())

        report_csv = self.path('basic_report.csv')
        with self.assertLogs('pmu_gan', 'INFO') as logs:
            self.assertEqual(pmu_gan.run(['detect', '-i', self.test_csv, '-d', 'basic', '--model', model,
                                          '-o', report_csv]), pmu_gan.EXIT_OK)
        self.assertIn('Nominal flag rate per score at z_p=3: 0.2700%', '\n'.join(logs.output))
        report = read_report_csv(report_csv)
        self.assertEqual(report.source, 'basic')
        self.assertEqual(len(report.windows), (60 * 120 - 40) // 20 + 1)
        self.assertEqual(pmu_gan.run(['detect', '-i', self.test_csv, '-d', 'enhanced', '--model', model]),
                         pmu_gan.EXIT_DATA)
        self.assertEqual(pmu_gan.run(['detect', '-i', self.test_csv, '-d', 'basic', '--model', model,
                                      '--set', 'window.size=60', '--set', 'window.stride=30']), pmu_gan.EXIT_DATA)

    def test_enhanced_train_and_detect(self):
        self.assertEqual(self.train('enhanced', 'enh'), pmu_gan.EXIT_OK)
        models = [self.path('enh.ipq9.model'), self.path('enh.v3.model')]
        for path in models:
            self.assertTrue(os.path.exists(path))
        self.assertFalse(os.path.exists(self.path('enh.all12.model')))
        report_csv = self.path('enh_report.csv')
        args = ['detect', '-i', self.test_csv, '-d', 'enhanced', '--model', models[1], '--model', models[0],
                '-o', report_csv]
        self.assertEqual(pmu_gan.run(args), pmu_gan.EXIT_OK)
        report = read_report_csv(report_csv)
        self.assertEqual(report.source, 'enhanced')
        self.assertTrue(all(np.isnan(w.score_s) and np.isfinite(w.score_s1) for w in report.windows))
        self.assertEqual(pmu_gan.run(['detect', '-i', self.test_csv, '-d', 'basic', '--model', models[0],
                                      '--model', models[1]]), pmu_gan.EXIT_CONFIG)

    def test_non_convergence_exit(self):
        args = ['train', '-i', self.train_csv, '-o', self.path('never')] + TINY_TRAINING
        args += ['--set', 'train.equilibrium_eps=1e-9']
        self.assertEqual(pmu_gan.run(args), pmu_gan.EXIT_NOT_CONVERGED)
        self.assertTrue(os.path.exists(self.path('never.all12.model')))

    def test_json_configuration(self):
        conf = self.path('conf.json')
        with open(conf, 'w') as f:
            json.dump({'feeder.duration_s': 15, 'synth.event_count': 1, 'synth.events': 'inrush'}, f)
        out = self.path('from_json.csv')
        self.assertEqual(pmu_gan.run(['synth', '-c', conf, '-o', out, '-t', self.path('from_json_truth.csv')]),
                         pmu_gan.EXIT_OK)
        self.assertEqual(len(read_stream_csv(out)), 15 * 120)
