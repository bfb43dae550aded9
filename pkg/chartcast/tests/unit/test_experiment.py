#    Licensed under the Apache License, Version 2.0 (the "License"); you may
#    not use this file except in compliance with the License. You may obtain
#    a copy of the License at
#
#         http://www.apache.org/licenses/LICENSE-2.0
#
#    Unless required by applicable law or agreed to in writing, software
#    distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
#    WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the
#    License for the specific language governing permissions and limitations
#    under the License.
#

import os
from unittest import mock

from hypothesis import given
from hypothesis import settings
from hypothesis import strategies as st

from chartcast import catalog
from chartcast.common import constants
from chartcast.common import exceptions
from chartcast.common import utils
from chartcast.encoder import base as enc_base
from chartcast import evaluation
from chartcast import experiment
from chartcast import market_data
from chartcast import pipeline
from chartcast.representation import normalizer
from chartcast.tests.unit import base


def _trial(index, f1, status=experiment.STATUS_OK):
    return experiment.TrialResult(index=index, params={}, seed=0,
                                  status=status, validation_f1=f1)


class TestSearchSpace(base.ChartcastTestCase):

    def test_default_grid(self):
        space = experiment.SearchSpace()
        self.assertEqual(180, space.size)
        self.assertEqual(180, len(space.grid()))
        self.assertIn({'batch_size': 256, 'learning_rate': 0.00005,
                       'dropout': 0.4, 'short_weight': -0.00015},
                      space.grid())

    def test_sample_without_replacement(self):
        space = experiment.SearchSpace(n_trials=30, seed=4)
        picks = space.sample()
        self.assertEqual(30, len(picks))
        self.assertEqual(30, len({tuple(sorted(p.items())) for p in picks}))
        self.assertEqual(picks, experiment.SearchSpace(n_trials=30,
                                                       seed=4).sample())
        self.assertNotEqual(picks, experiment.SearchSpace(n_trials=30,
                                                          seed=5).sample())

    def test_whole_grid(self):
        space = experiment.SearchSpace(batch_sizes=(16, 32),
                                       learning_rates=(0.001,),
                                       dropouts=(0.0,), short_weights=(0.0,),
                                       n_trials=2)
        self.assertEqual(sorted(p['batch_size'] for p in space.sample()),
                         [16, 32])

    def test_too_many_trials(self):
        self.assertRaises(exceptions.ConfigRangeError,
                          experiment.SearchSpace, n_trials=181)
        self.assertRaises(exceptions.ConfigRangeError,
                          experiment.SearchSpace, n_trials=0)

    def test_from_conf(self):
        self.cfg.config(group='search', trials=5, batch_sizes=[8, 16])
        space = experiment.SearchSpace.from_conf(3)
        self.assertEqual((8, 16), space.batch_sizes)
        self.assertEqual(5, space.n_trials)
        self.assertEqual(3, space.seed)
        self.assertEqual(7, experiment.SearchSpace.from_conf(
            3, n_trials=7).n_trials)


class TestSelection(base.ChartcastTestCase):

    def test_top_three(self):
        trials = [_trial(0, 0.4), _trial(1, 0.6), _trial(2, 0.5),
                  _trial(3, 0.55)]
        self.assertEqual([1, 3, 2], experiment.select_top(trials, 3))

    def test_ties_go_to_lower_index(self):
        trials = [_trial(0, 0.5), _trial(1, 0.7), _trial(2, 0.7),
                  _trial(3, 0.5)]
        self.assertEqual([1, 2, 0], experiment.select_top(trials, 3))

    def test_failed_trials_are_skipped(self):
        trials = [_trial(0, None, experiment.STATUS_FAILED),
                  _trial(1, 0.2)]
        self.assertEqual([1], experiment.select_top(trials, 3))

    @given(st.lists(st.integers(0, 100), min_size=1, max_size=20),
           st.integers(1, 50))
    @settings(max_examples=100, deadline=None)
    def test_scaling_keeps_selection(self, scores, factor):
        trials = [_trial(i, s / 100.0) for i, s in enumerate(scores)]
        scaled = [_trial(i, factor * s / 100.0)
                  for i, s in enumerate(scores)]
        self.assertEqual(experiment.select_top(trials, 3),
                         experiment.select_top(scaled, 3))


class TestRunSearch(base.ChartcastTestCase):

    def setUp(self):
        super().setUp()
        self.cfg.config(group='train', max_epochs=2, hidden_dim=8,
                        mlp_hidden=8)
        series = market_data.generate_synthetic(3, 600, 10.0)
        self.parts = market_data.split(series)
        params = normalizer.fit_normalizer(self.parts[0])
        spec = catalog.get_model_spec(catalog.LSTM)
        encoder_spec = enc_base.EncoderSpec(kind=constants.ENCODER_IDENTITY)
        self.data = [
            pipeline.build_split_data(
                spec, part, market_data.label(part, market_data.STANDARD),
                params, encoder_spec)
            for part in self.parts]
        self.run_dir = os.path.join(self.tempdir, 'search')

    def _space(self, short_weights=(0.0,), n_trials=2):
        return experiment.SearchSpace(batch_sizes=(64,),
                                      learning_rates=(0.001, 0.0005),
                                      dropouts=(0.0,),
                                      short_weights=short_weights,
                                      n_trials=n_trials, seed=1)

    def _search(self, space, top_k=3):
        return experiment.run_search(catalog.LSTM, market_data.STANDARD,
                                     space, *self.data, run_dir=self.run_dir,
                                     top_k=top_k)

    def test_search(self):
        result = self._search(self._space())
        self.assertEqual(2, len(result.trials))
        self.assertEqual([0, 1], sorted(result.selected))
        reports = [result.trials[i].test_report for i in result.selected]
        self.assertAlmostEqual(
            evaluation.mean_reports(reports).f1, result.aggregate.f1)
        self.assertEqual(len(self.data[2].samples),
                         reports[0].counts.total)
        base_dir = os.path.join(self.run_dir, 'lstm', 'standard')
        stored = experiment.ExperimentResult.from_dict(
            utils.read_json(os.path.join(base_dir, experiment.RESULT_FILE)))
        self.assertEqual(result.selected, stored.selected)
        for index in range(2):
            directory = experiment.trial_dir(self.run_dir, 'lstm',
                                             'standard', index)
            self.assertTrue(os.path.exists(
                os.path.join(directory, 'checkpoint.bin')))
            self.assertTrue(os.path.exists(
                os.path.join(directory, 'metrics.json')))

    def test_audit_order(self):
        self._search(self._space(), top_k=1)
        events = [r['event'] for r in utils.read_jsonl(os.path.join(
            self.run_dir, 'lstm', 'standard', constants.AUDIT_LOG))]
        self.assertEqual(['trials_finished', 'selected', 'test_evaluated'],
                         events)

    def test_trial_seeds_are_derived(self):
        result = self._search(self._space())
        self.assertEqual([utils.derive_seed(1, 0), utils.derive_seed(1, 1)],
                         [t.seed for t in result.trials])

    def test_finished_trials_are_reused(self):
        first = self._search(self._space())
        with mock.patch.object(experiment.training, 'train',
                               side_effect=AssertionError) as m_train:
            second = self._search(self._space())
        self.assertFalse(m_train.called)
        self.assertEqual([t.validation_f1 for t in first.trials],
                         [t.validation_f1 for t in second.trials])

    def test_failed_trial(self):
        space = experiment.SearchSpace(batch_sizes=(64,),
                                       learning_rates=(0.001,),
                                       dropouts=(0.0,),
                                       short_weights=(0.0, -1.0),
                                       n_trials=2, seed=1)
        result = self._search(space)
        failed = [t for t in result.trials
                  if t.status == experiment.STATUS_FAILED]
        self.assertEqual(1, len(failed))
        self.assertEqual(-1.0, failed[0].params['short_weight'])
        self.assertNotIn(failed[0].index, result.selected)
        self.assertEqual(1, len(result.selected))

    def test_every_trial_failed(self):
        space = experiment.SearchSpace(batch_sizes=(64,),
                                       learning_rates=(0.001,),
                                       dropouts=(0.0,),
                                       short_weights=(-1.0,),
                                       n_trials=1, seed=1)
        self.assertRaises(exceptions.TrainingError, self._search, space)


class TestBaselinesAndReport(base.ChartcastTestCase):

    def setUp(self):
        super().setUp()
        self.test = market_data.generate_synthetic(8, 300, 10.0)
        self.samples = market_data.label(self.test, market_data.STANDARD)

    def test_baseline_reports(self):
        reports = experiment.baseline_reports(
            self.samples, self.test, market_data.STANDARD, seed=4)
        self.assertEqual(set(constants.STRATEGIES), set(reports))
        p = sum(s.label for s in self.samples) / len(self.samples)
        self.assertAlmostEqual(2 * p / (1 + p), reports['long'].f1,
                               delta=1e-9)
        self.assertEqual(0.0, reports['short'].f1)
        self.assertEqual(0.0, reports['long'].mcc)
        self.assertEqual(0.5, reports['long'].balanced_acc)
        self.assertEqual(-reports['long'].pip_long,
                         reports['short'].pip_short)

    def test_write_collect_and_render(self):
        reports = experiment.baseline_reports(
            self.samples, self.test, market_data.STANDARD, seed=4)
        directory = os.path.join(self.tempdir, 'evaluate', 'standard')
        experiment.write_baselines(directory, 'standard', reports,
                                   config_hash='abc')
        aggregate = reports['long']
        result = experiment.ExperimentResult(
            model_kind=catalog.CLIP_TEXT, scheme='standard',
            trials=[_trial(0, 0.6)], selected=[0], aggregate=aggregate)
        model_dir = os.path.join(self.tempdir, 'search', 'clip-text',
                                 'standard')
        utils.write_json(os.path.join(model_dir, experiment.RESULT_FILE),
                         result.to_dict())

        results, baselines = experiment.collect_results(self.tempdir)
        self.assertEqual(['clip-text'], [r.model_kind for r in results])
        self.assertEqual(reports['random'], baselines['standard']['random'])

        lines = experiment.render_report(results, baselines).splitlines()
        names = [line.split('  ')[0].strip() for line in lines[3:]]
        self.assertEqual('Standard Label', lines[2])
        self.assertEqual(['Random', 'Always Long', 'Always Short',
                          'CLIP-LSTM (text)'], names)
