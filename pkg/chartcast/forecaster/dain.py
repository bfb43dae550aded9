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

"""Deep adaptive input normalization front-end."""

import dataclasses

import torch
from torch import nn

from chartcast.common import exceptions
from chartcast.i18n import _

# Lower bound of the learned scale divisor.
SCALE_EPSILON = 1e-8
# Keeps the root-mean-square differentiable at zero.
RMS_EPSILON = 1e-12


@dataclasses.dataclass(frozen=True)
class DainConfig:
    shift_lr: float = 1.0
    scale_lr: float = 0.1
    gate_lr: float = 0.01
    feature_dim: int = 4

    def __post_init__(self):
        if min(self.shift_lr, self.scale_lr, self.gate_lr) <= 0:
            raise exceptions.ConfigError(
                reason=_('DAIN learning-rate multipliers must be positive'))


class Dain(nn.Module):
    """Shift, scale and gate a (batch, time, feature) tensor per sequence.

    1. subtract a learned linear map of the per-sequence feature mean;
    2. divide by a learned linear map of the root-mean-square of the
       centered values;
    3. multiply by a sigmoid gate of a learned linear map of the mean of
       the scaled values.
    """

    def __init__(self, feature_dim=4):
        super().__init__()
        self.shift = nn.Linear(feature_dim, feature_dim, bias=False)
        self.scale = nn.Linear(feature_dim, feature_dim, bias=False)
        self.gate = nn.Linear(feature_dim, feature_dim, bias=True)
        with torch.no_grad():
            self.shift.weight.copy_(torch.eye(feature_dim))
            self.scale.weight.copy_(torch.eye(feature_dim))
        self.clamp_count = 0

    def forward(self, inputs):
        mean = inputs.mean(dim=1)
        centered = inputs - self.shift(mean).unsqueeze(1)

        rms = torch.sqrt((centered ** 2).mean(dim=1) + RMS_EPSILON)
        divisor = self.scale(rms)
        clamped = divisor <= SCALE_EPSILON
        if bool(clamped.any()):
            self.clamp_count += int(clamped.sum())
            divisor = torch.clamp(divisor, min=SCALE_EPSILON)
        scaled = centered / divisor.unsqueeze(1)

        gate = torch.sigmoid(self.gate(scaled.mean(dim=1)))
        return scaled * gate.unsqueeze(1)

    def param_groups(self, base_lr, config):
        return [
            {'params': self.shift.parameters(),
             'lr': base_lr * config.shift_lr},
            {'params': self.scale.parameters(),
             'lr': base_lr * config.scale_lr},
            {'params': self.gate.parameters(),
             'lr': base_lr * config.gate_lr},
        ]


def dain_forward(batch, module):
    """Apply ``module`` to a numpy or tensor batch, returning a tensor."""
    return module(torch.as_tensor(batch, dtype=module.shift.weight.dtype))
