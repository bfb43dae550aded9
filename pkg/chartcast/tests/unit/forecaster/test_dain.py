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

import torch

from chartcast.common import exceptions
from chartcast.forecaster import dain
from chartcast.forecaster import model
from chartcast.tests.unit import base


class TestDain(base.ChartcastTestCase):

    def setUp(self):
        super().setUp()
        torch.manual_seed(0)
        self.module = dain.Dain(feature_dim=4)
        self.inputs = torch.randn(3, 10, 4, dtype=torch.float32) * 5 + 100

    def test_shape(self):
        self.assertEqual((3, 10, 4), tuple(self.module(self.inputs).shape))

    def test_shift_invariant_at_init(self):
        offset = torch.tensor([[[3.0, -7.0, 11.0, 0.5]]])
        torch.testing.assert_close(self.module(self.inputs),
                                   self.module(self.inputs + offset),
                                   rtol=1e-4, atol=1e-4)

    def test_scale_invariant_at_init(self):
        torch.testing.assert_close(self.module(self.inputs),
                                   self.module(self.inputs * 3.0),
                                   rtol=1e-4, atol=1e-4)

    def test_scale_is_clamped(self):
        with torch.no_grad():
            self.module.scale.weight.zero_()
        outputs = self.module(self.inputs)
        self.assertTrue(torch.isfinite(outputs).all())
        self.assertEqual(12, self.module.clamp_count)

    def test_three_learning_rates(self):
        groups = self.module.param_groups(0.01, dain.DainConfig())
        self.assertEqual([0.01, 0.001, 0.0001],
                         [round(g['lr'], 10) for g in groups])

    def test_forward_from_numpy(self):
        outputs = dain.dain_forward(self.inputs.numpy(), self.module)
        self.assertEqual(torch.float32, outputs.dtype)

    def test_config(self):
        self.assertRaises(exceptions.ConfigError, dain.DainConfig,
                          scale_lr=0.0)


class TestDainGradients(base.ChartcastTestCase):

    def setUp(self):
        super().setUp()
        torch.manual_seed(1)
        self.inputs = torch.randn(2, 3, 4, dtype=torch.float64,
                                  requires_grad=True)

    def test_gradcheck_inputs(self):
        module = dain.Dain(feature_dim=4).double()
        self.assertTrue(torch.autograd.gradcheck(
            module, (self.inputs,), eps=1e-6, atol=1e-5))

    def test_gradcheck_parameters(self):
        module = dain.Dain(feature_dim=4).double()
        names = [name for name, _param in module.named_parameters()]
        params = tuple(p.detach().clone().requires_grad_(True)
                       for p in module.parameters())
        inputs = self.inputs.detach()

        def call(*values):
            return torch.func.functional_call(
                module, dict(zip(names, values)), (inputs,))

        self.assertTrue(torch.autograd.gradcheck(call, params, eps=1e-6,
                                                 atol=1e-5))

    def test_gradcheck_forecaster(self):
        config = model.LstmHeadConfig(input_dim=4, hidden_dim=3,
                                      mlp_hidden=3, dropout=0.0)
        module = model.LstmHead(config,
                                dain.DainConfig(feature_dim=4)).double()
        module.eval()
        self.assertTrue(torch.autograd.gradcheck(
            module, (self.inputs,), eps=1e-6, atol=1e-5))
        self.assertEqual(0, module.dain.clamp_count)
