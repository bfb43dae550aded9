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

import numpy as np
import pandas as pd
import torch

from chartcast import analysis
from chartcast.common import exceptions
from chartcast.common import utils
from chartcast.forecaster import model
from chartcast.forecaster import training
from chartcast import market_data
from chartcast.representation import chart
from chartcast.tests.unit import base
from chartcast.tests.unit import fakes


def _first_columns(vectors):
    return np.asarray(vectors)[:, :2]


class TestRollout(base.ChartcastTestCase):

    def test_single_block(self):
        attn = torch.tensor([[[[0.5, 0.5], [0.25, 0.75]]]])
        grad = torch.ones_like(attn)
        relevance = analysis._rollout([attn], [grad])
        torch.testing.assert_close(
            torch.tensor([[1.5, 0.5], [0.25, 1.75]]), relevance)

    def test_negative_gradients_are_clamped(self):
        attn = torch.full((1, 2, 3, 3), 1.0 / 3)
        grad = -torch.ones_like(attn)
        relevance = analysis._rollout([attn, attn], [grad, grad])
        torch.testing.assert_close(torch.eye(3), relevance)


class TestRelevance(base.ChartcastTestCase):

    def setUp(self):
        super().setUp()
        self.handle = fakes.tiny_encoder()
        window = market_data.generate_synthetic(2, 20, 15.0)
        self.image = chart.render_chart(
            window, chart.RenderConfig(width=64, height=64))

    def test_relevance_map(self):
        rmap = analysis.relevance(self.image, None, self.handle)
        self.assertEqual((4, 4), rmap.grid.shape)
        self.assertGreater(rmap.raw_max, 0)
        self.assertAlmostEqual(1.0, rmap.grid.max())
        self.assertGreaterEqual(rmap.grid.min(), 0.0)
        self.assertEqual(self.image.pixels.shape, rmap.overlay.shape)
        self.assertEqual(np.uint8, rmap.overlay.dtype)

    def test_deterministic(self):
        target = np.random.default_rng(0).normal(
            size=fakes.TINY_PROJECTION_DIM)
        first = analysis.relevance(self.image, target, self.handle)
        second = analysis.relevance(self.image, target, self.handle)
        np.testing.assert_array_equal(first.grid, second.grid)
        np.testing.assert_array_equal(first.overlay, second.overlay)

    def test_weights_stay_frozen(self):
        analysis.relevance(self.image, None, self.handle)
        self.assertFalse(any(p.requires_grad
                             for p in self.handle.model.parameters()))
        self.assertFalse(any(p.grad is not None
                             for p in self.handle.model.parameters()))

    def test_zero_alpha_keeps_chart(self):
        rmap = analysis.relevance(self.image, None, self.handle, alpha=0.0)
        np.testing.assert_array_equal(self.image.pixels, rmap.overlay)

    def test_unsupported_encoder(self):
        handle = mock.Mock(model=object(), checkpoint_id='numeric')
        self.assertRaises(exceptions.UnsupportedEncoder, analysis.relevance,
                          self.image, None, handle)

    def test_save(self):
        rmap = analysis.relevance(self.image, None, self.handle)
        path = analysis.save_relevance(self.tempdir, fakes.START, rmap)
        self.assertEqual('relevance_20200421T020000.png',
                         os.path.basename(path))
        with open(path, 'rb') as handle:
            self.assertEqual(b'\x89PNG', handle.read(4))


class TestLineMass(base.ChartcastTestCase):

    def _image(self):
        pixels = np.full((8, 8, 3), 255, dtype=np.uint8)
        pixels[1:3, 1:3] = 0
        return chart.ChartImage(pixels=pixels, window_start=None,
                                window_end=None, window_hours=0,
                                value_range=(0.0, 0.0))

    def test_ratio(self):
        grid = np.array([[1.0, 0.1], [0.1, 0.1]])
        rmap = analysis.RelevanceMap(grid=grid, overlay=None, raw_max=1.0)
        self.assertAlmostEqual(10.0, analysis.line_mass_ratio(rmap,
                                                              self._image()))

    def test_undefined(self):
        rmap = analysis.RelevanceMap(grid=np.array([[1.0, 0.0], [0.0, 0.0]]),
                                     overlay=None, raw_max=1.0)
        self.assertIsNone(analysis.line_mass_ratio(rmap, self._image()))


class TestForecasterTarget(base.ChartcastTestCase):

    def test_gradient_direction(self):
        rng = np.random.default_rng(0)
        features = rng.normal(size=(32, 5, 4)).astype(np.float32)
        labels = rng.integers(0, 2, size=32)
        trained = training.train(
            model.LstmHeadConfig(input_dim=4, hidden_dim=8, mlp_hidden=8),
            (features, labels), (features, labels),
            training.TrainConfig(batch_size=16, max_epochs=1, seed=1))
        target = analysis.forecaster_target(trained, features[0])
        self.assertEqual((4,), target.shape)
        self.assertTrue(np.isfinite(target).all())
        short = analysis.forecaster_target(trained, features[0],
                                           class_index=0)
        np.testing.assert_allclose(-target, short, atol=1e-6)


class TestCases(base.ChartcastTestCase):

    def test_select_true_longs(self):
        anchors = ['a', 'b', 'c', 'd', 'e']
        predictions = [1, 1, 0, 1, 1]
        labels = [1, 0, 0, 1, 1]
        picked = analysis.select_cases(anchors, predictions, labels, 1, 2,
                                       seed=3)
        self.assertEqual(2, len(picked))
        self.assertTrue(set(picked) <= {'a', 'd', 'e'})
        self.assertEqual(picked, analysis.select_cases(
            anchors, predictions, labels, 1, 2, seed=3))
        self.assertEqual(['c'], analysis.select_cases(
            anchors, predictions, labels, 0, 5, seed=3))

    def test_no_cases(self):
        self.assertEqual([], analysis.select_cases(['a'], [1], [0], 1, 3, 0))


class TestProjection(base.ChartcastTestCase):

    def test_project_with_custom_projector(self):
        vectors = np.arange(12, dtype=np.float64).reshape(4, 3)
        projection = analysis.project_embeddings(
            vectors, [0, 1, 1, 0], ['a', 'b', 'c', 'd'], seed=0,
            projector=_first_columns)
        self.assertEqual(4, len(projection))
        self.assertEqual((3.0, 4.0, 1, 'b'), projection.points[1])
        frame = projection.to_frame()
        self.assertEqual(['x', 'y', 'label', 'anchor'], list(frame.columns))

    def test_too_few_points(self):
        self.assertRaises(exceptions.TooFewPoints,
                          analysis.project_embeddings, np.zeros((1, 3)),
                          [0], ['a'], seed=0)

    def test_tsne_is_seeded(self):
        vectors = np.random.default_rng(1).normal(size=(12, 6))
        first = analysis.tsne_projector(5, 30.0)(vectors)
        second = analysis.tsne_projector(5, 30.0)(vectors)
        self.assertEqual((12, 2), first.shape)
        np.testing.assert_allclose(first, second)

    def test_trajectory_score(self):
        points = tuple((float(i), 0.0, 0, i) for i in range(20))
        score = analysis.trajectory_score(analysis.Projection2D(points), 1)
        self.assertEqual(1.0, score['consecutive_mean'])
        self.assertGreater(score['random_mean'], 1.0)
        self.assertTrue(score['passed'])
        short = analysis.trajectory_score(
            analysis.Projection2D(points[:2]), 1)
        self.assertIsNone(short['passed'])

    def test_bucket_summary(self):
        points = tuple((float(n > 10) * 100 + n * 0.01, 0.0, str(n), str(n))
                       for n in range(1, 21))
        summary = analysis.bucket_summary(analysis.Projection2D(points), 10)
        self.assertEqual(2, summary['buckets'])
        self.assertLess(summary['intra_mean'], summary['inter_mean'])
        self.assertTrue(summary['passed'])

    def test_write_projection(self):
        points = ((0.5, 1.5, 1, fakes.START), (2.0, 3.0, 0, fakes.START))
        path = os.path.join(self.tempdir, 'tsne', 'points.csv')
        analysis.write_projection(path, analysis.Projection2D(points))
        frame = pd.read_csv(path)
        self.assertEqual(['2020-04-21 02:00:00'] * 2,
                         list(frame['anchor']))
        self.assertEqual([0.5, 2.0], list(frame['x']))


class TestNumberStudy(base.ChartcastTestCase):

    def test_study(self):
        handle = fakes.tiny_encoder()
        projection, summary = analysis.number_embedding_study(
            20, handle, seed=0, bucket_size=10, projector=_first_columns)
        self.assertEqual(20, len(projection))
        self.assertEqual('1', projection.points[0][2])
        self.assertEqual(2, summary['buckets'])
        self.assertIn('passed', summary)

    def test_single_number(self):
        handle = fakes.tiny_encoder()
        projection, summary = analysis.number_embedding_study(
            1, handle, seed=0)
        self.assertEqual(((0.0, 0.0, '1', '1'),), projection.points)
        self.assertEqual({}, summary)

    def test_write_summary(self):
        path = os.path.join(self.tempdir, 'summary.json')
        analysis.write_summary(path, {'passed': True}, seed=3)
        self.assertEqual({'passed': True, 'provenance': {'seed': 3}},
                         utils.read_json(path))
