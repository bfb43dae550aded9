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

from hypothesis import assume
from hypothesis import given
from hypothesis import settings
from hypothesis import strategies as st
import numpy as np
from sklearn import metrics as sk_metrics

from chartcast.common import constants
from chartcast.common import exceptions
from chartcast import evaluation
from chartcast import market_data
from chartcast import strategy
from chartcast.tests.unit import base
from chartcast.tests.unit import fakes

binary_pairs = st.integers(min_value=1, max_value=60).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(0, 1), min_size=n, max_size=n),
        st.lists(st.integers(0, 1), min_size=n, max_size=n)))


class TestMetrics(base.ChartcastTestCase):

    def test_hand_computed(self):
        counts = evaluation.ConfusionCounts(tp=2, fp=1, tn=3, fn=1)
        self.assertAlmostEqual(2.0 / 3, evaluation.f1_score(counts))
        self.assertAlmostEqual((2.0 / 3 + 3.0 / 4) / 2,
                               evaluation.balanced_accuracy(counts))
        self.assertAlmostEqual(5.0 / 12, evaluation.matthews(counts))
        report = evaluation.metrics(counts)
        self.assertAlmostEqual(75.0, report.precision_short)
        self.assertAlmostEqual(200.0 / 3, report.precision_long)

    def test_always_long_closed_form(self):
        labels = np.zeros(10000, dtype=np.int64)
        labels[:5803] = 1
        counts = evaluation.confusion_from_arrays(np.ones(10000), labels)
        report = evaluation.metrics(counts)
        p = 0.5803
        self.assertAlmostEqual(2 * p / (1 + p), report.f1, delta=1e-9)
        self.assertAlmostEqual(0.7344, report.f1, delta=5e-5)
        self.assertEqual(0.5, report.balanced_acc)
        self.assertEqual(0.0, report.mcc)
        self.assertEqual(0.0, report.precision_short)
        self.assertAlmostEqual(58.03, report.precision_long)

    def test_always_short(self):
        labels = np.array([1, 0, 1, 1, 0])
        report = evaluation.metrics(evaluation.confusion_from_arrays(
            np.zeros(5), labels))
        self.assertEqual(0.0, report.f1)
        self.assertEqual(0.0, report.mcc)
        self.assertEqual(0.5, report.balanced_acc)
        self.assertEqual(0.0, report.precision_long)
        self.assertAlmostEqual(40.0, report.precision_short)

    def test_empty_counts(self):
        report = evaluation.metrics(evaluation.ConfusionCounts())
        self.assertEqual(0.0, report.f1)
        self.assertEqual(0.0, report.balanced_acc)

    def test_negative_counts(self):
        self.assertRaises(exceptions.ValidationError,
                          evaluation.ConfusionCounts, tp=-1)

    @given(binary_pairs)
    @settings(max_examples=1000, deadline=None)
    def test_agrees_with_sklearn(self, pair):
        predictions, labels = pair
        assume(len(set(labels)) == 2)
        counts = evaluation.confusion_from_arrays(predictions, labels)
        report = evaluation.metrics(counts)
        self.assertAlmostEqual(
            sk_metrics.f1_score(labels, predictions, zero_division=0),
            report.f1, places=12)
        self.assertAlmostEqual(
            sk_metrics.matthews_corrcoef(labels, predictions),
            report.mcc, places=12)
        self.assertAlmostEqual(
            sk_metrics.balanced_accuracy_score(labels, predictions),
            report.balanced_acc, places=12)
        self.assertAlmostEqual(
            100 * sk_metrics.precision_score(labels, predictions,
                                             pos_label=1, zero_division=0),
            report.precision_long, places=10)
        self.assertAlmostEqual(
            100 * sk_metrics.precision_score(labels, predictions,
                                             pos_label=0, zero_division=0),
            report.precision_short, places=10)

    @given(binary_pairs)
    @settings(max_examples=100, deadline=None)
    def test_label_swap_symmetry(self, pair):
        predictions, labels = np.array(pair[0]), np.array(pair[1])
        report = evaluation.metrics(
            evaluation.confusion_from_arrays(predictions, labels))
        swapped = evaluation.metrics(
            evaluation.confusion_from_arrays(1 - predictions, 1 - labels))
        self.assertAlmostEqual(report.precision_long,
                               swapped.precision_short)
        self.assertAlmostEqual(report.precision_short,
                               swapped.precision_long)
        self.assertAlmostEqual(report.balanced_acc, swapped.balanced_acc)
        self.assertAlmostEqual(report.mcc, swapped.mcc)

    def test_misaligned_arrays(self):
        self.assertRaises(exceptions.MisalignedAnchors,
                          evaluation.confusion_from_arrays, [1, 0], [1])


class TestLedger(base.ChartcastTestCase):

    def setUp(self):
        super().setUp()
        closes = [100, 101, 102, 103, 104, 105, 107, 99, 101, 103]
        self.series = fakes.make_series(closes)
        self.samples = market_data.label(self.series, market_data.STANDARD)

    def test_pnl_by_direction(self):
        anchors = self.series.timestamps
        decisions = [strategy.StrategyDecision(anchors[0], 1),
                     strategy.StrategyDecision(anchors[1], 0)]
        ledger = evaluation.build_ledger(decisions, self.series,
                                         market_data.STANDARD)
        self.assertEqual([7.0, 2.0], [t.pnl for t in ledger.trades])
        self.assertEqual((100.0, 107.0), (ledger.trades[0].entry_price,
                                          ledger.trades[0].exit_price))

    def test_delayed_entry(self):
        decisions = [strategy.StrategyDecision(self.series[0].timestamp, 1)]
        ledger = evaluation.build_ledger(decisions, self.series,
                                         market_data.DELAYED)
        self.assertEqual(101.0, ledger.trades[0].entry_price)
        self.assertEqual(-2.0, ledger.trades[0].pnl)

    def test_missing_exit_is_dropped(self):
        decisions = strategy.always_long(self.series.timestamps)
        ledger = evaluation.build_ledger(decisions, self.series,
                                         market_data.STANDARD)
        self.assertEqual(4, len(ledger))
        self.assertEqual(6, ledger.dropped)

    def test_evaluate(self):
        decisions = strategy.always_long(self.samples)
        report = evaluation.evaluate(decisions, self.samples, self.series,
                                     market_data.STANDARD)
        self.assertEqual(sum(s.delta for s in self.samples),
                         report.pip_long)
        self.assertEqual(0.0, report.pip_short)
        self.assertEqual(len(self.samples), report.counts.total)
        self.assertEqual('standard', report.scheme)

    def test_always_short_pips_mirror_long(self):
        long_report = evaluation.evaluate(
            strategy.always_long(self.samples), self.samples, self.series,
            market_data.STANDARD)
        short_report = evaluation.evaluate(
            strategy.always_short(self.samples), self.samples, self.series,
            market_data.STANDARD)
        self.assertEqual(-long_report.pip_long, short_report.pip_short)

    def test_misaligned_decisions(self):
        decisions = strategy.always_long(self.samples)[1:]
        self.assertRaises(exceptions.MisalignedAnchors,
                          evaluation.confusion, decisions, self.samples[:-1])

    def test_ledger_and_counts_must_match(self):
        ledger = evaluation.build_ledger(
            strategy.always_long(self.samples), self.series,
            market_data.STANDARD)
        self.assertRaises(exceptions.MisalignedAnchors, evaluation.metrics,
                          evaluation.ConfusionCounts(tp=1), ledger)


class TestReports(base.ChartcastTestCase):

    def _report(self, **fields):
        values = dict.fromkeys(evaluation.METRIC_FIELDS, 0.0)
        values.update(fields)
        return evaluation.MetricsReport(scheme='standard', **values)

    def test_mean(self):
        mean = evaluation.mean_reports([self._report(pip_long=10.0),
                                        self._report(pip_long=20.0),
                                        self._report(pip_long=30.0)])
        self.assertEqual(20.0, mean.pip_long)
        self.assertEqual('standard', mean.scheme)
        self.assertIsNone(mean.counts)
        self.assertRaises(exceptions.NoSamples, evaluation.mean_reports, [])

    def test_dict(self):
        report = evaluation.metrics(
            evaluation.ConfusionCounts(tp=2, fp=1, tn=3, fn=1),
            scheme=market_data.STANDARD)
        self.assertEqual(report,
                         evaluation.MetricsReport.from_dict(report.to_dict()))

    def test_render_table(self):
        rows = {constants.SCHEME_STANDARD: [
            ('Always Long', self._report(f1=0.7344, precision_long=58.03))],
            constants.SCHEME_DELAYED: [('Random', self._report(mcc=-0.01))]}
        lines = evaluation.render_table(rows).splitlines()
        self.assertEqual(['Models', 'F1', 'MCC'], lines[0].split()[:3])
        self.assertEqual(set('-'), set(lines[1]))
        self.assertEqual('Standard Label', lines[2])
        self.assertTrue(lines[3].startswith('Always Long'))
        self.assertIn('0.73', lines[3].split())
        self.assertIn('58.03', lines[3].split())
        self.assertEqual('Delayed Label', lines[4])
        self.assertIn('-0.01', lines[5].split())

    def test_render_empty(self):
        self.assertEqual(2, len(evaluation.render_table({}).splitlines()))
