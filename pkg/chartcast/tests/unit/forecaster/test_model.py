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

import numpy as np
import torch

from chartcast.common import constants
from chartcast.common import exceptions
from chartcast.encoder import base as enc_base
from chartcast.forecaster import dain
from chartcast.forecaster import model
from chartcast.tests.unit import base
from chartcast.tests.unit import fakes


class TestLstmHeadConfig(base.ChartcastTestCase):

    def test_ranges(self):
        self.assertRaises(exceptions.ConfigRangeError, model.LstmHeadConfig,
                          input_dim=4, dropout=1.0)
        self.assertRaises(exceptions.ConfigRangeError, model.LstmHeadConfig,
                          input_dim=0)
        self.assertRaises(exceptions.ConfigRangeError, model.LstmHeadConfig,
                          input_dim=4, num_layers=0)


class TestLstmHead(base.ChartcastTestCase):

    def setUp(self):
        super().setUp()
        torch.manual_seed(0)
        self.config = model.LstmHeadConfig(input_dim=4, hidden_dim=8,
                                           mlp_hidden=6, dropout=0.2)
        self.module = model.LstmHead(self.config)

    def test_probabilities(self):
        probs = model.forward(self.module, np.random.default_rng(0).normal(
            size=(5, 24, 4)))
        self.assertEqual((5, 2), probs.shape)
        np.testing.assert_allclose(np.ones(5), probs.sum(axis=1),
                                   rtol=1e-6)

    def test_forward_is_deterministic_and_restores_mode(self):
        batch = np.ones((2, 24, 4))
        self.module.train()
        first = model.forward(self.module, batch)
        second = model.forward(self.module, batch)
        np.testing.assert_array_equal(first, second)
        self.assertTrue(self.module.training)

    def test_dimension_checks(self):
        self.assertRaises(exceptions.DimensionMismatch, model.forward,
                          self.module, np.ones((2, 24, 3)))
        self.assertRaises(exceptions.DimensionMismatch, model.forward,
                          self.module, np.ones((24, 4)))

    def test_accepts_sequences(self):
        sequences = [enc_base.EmbeddingSequence(
            vectors=np.zeros((24, 4)), anchor=fakes.START, label=1,
            kind=constants.WINDOW_NUMERIC24)] * 3
        self.assertEqual((3, 2), model.forward(self.module, sequences).shape)

    def test_stacked(self):
        config = model.LstmHeadConfig(input_dim=4, hidden_dim=8,
                                      num_layers=2)
        module = model.LstmHead(config)
        self.assertEqual(2, module.lstm.num_layers)
        self.assertEqual(config.dropout, module.lstm.dropout)
        self.assertEqual(0.0, self.module.lstm.dropout)

    def test_param_groups(self):
        self.assertEqual(1, len(self.module.param_groups(0.001)))
        module = model.LstmHead(self.config, dain.DainConfig())
        groups = module.param_groups(0.001)
        self.assertEqual(4, len(groups))
        n_params = sum(len(list(g['params'])) for g in groups)
        self.assertEqual(len(list(module.parameters())), n_params)

    def test_dain_dimension(self):
        self.assertRaises(exceptions.DimensionMismatch, model.LstmHead,
                          self.config, dain.DainConfig(feature_dim=3))
