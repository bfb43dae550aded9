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

import dataclasses

import numpy as np
import torch
from torch import nn

from chartcast.common import exceptions
from chartcast.encoder import base as enc_base
from chartcast.forecaster import dain as dain_mod
from chartcast.i18n import _

NUM_CLASSES = 2


@dataclasses.dataclass(frozen=True)
class LstmHeadConfig:
    input_dim: int
    hidden_dim: int = 64
    num_layers: int = 1
    mlp_hidden: int = 32
    dropout: float = 0.4

    def __post_init__(self):
        if not 0.0 <= self.dropout < 1.0:
            raise exceptions.ConfigRangeError(value=self.dropout,
                                              key='dropout', bounds='[0, 1)')
        for name in ('input_dim', 'hidden_dim', 'num_layers', 'mlp_hidden'):
            if getattr(self, name) < 1:
                raise exceptions.ConfigRangeError(
                    value=getattr(self, name), key=name, bounds='>= 1')


class LstmHead(nn.Module):
    """LSTM stack whose final hidden state feeds a two-way MLP classifier.

    With a DainConfig the raw inputs pass through a Dain front-end first.
    """

    def __init__(self, config, dain_config=None):
        super().__init__()
        self.config = config
        self.dain_config = dain_config
        self.dain = None
        if dain_config is not None:
            if dain_config.feature_dim != config.input_dim:
                raise exceptions.DimensionMismatch(
                    got=dain_config.feature_dim, expected=config.input_dim)
            self.dain = dain_mod.Dain(dain_config.feature_dim)
        self.lstm = nn.LSTM(
            input_size=config.input_dim,
            hidden_size=config.hidden_dim,
            num_layers=config.num_layers,
            batch_first=True,
            dropout=config.dropout if config.num_layers > 1 else 0.0)
        self.head = nn.Sequential(
            nn.Dropout(config.dropout),
            nn.Linear(config.hidden_dim, config.mlp_hidden),
            nn.ReLU(),
            nn.Dropout(config.dropout),
            nn.Linear(config.mlp_hidden, NUM_CLASSES))

    def forward(self, inputs):
        """Class logits for a (batch, time, input_dim) tensor."""
        if inputs.shape[-1] != self.config.input_dim:
            raise exceptions.DimensionMismatch(got=inputs.shape[-1],
                                               expected=self.config.input_dim)
        if self.dain is not None:
            inputs = self.dain(inputs)
        _output, (hidden, _cell) = self.lstm(inputs)
        return self.head(hidden[-1])

    def param_groups(self, base_lr):
        if self.dain is None:
            return [{'params': self.parameters(), 'lr': base_lr}]
        rest = [p for name, p in self.named_parameters()
                if not name.startswith('dain.')]
        return ([{'params': rest, 'lr': base_lr}] +
                self.dain.param_groups(base_lr, self.dain_config))


def as_tensor(batch, model):
    """Model-dtype tensor from sequences, an array or a tensor."""
    dtype = next(model.parameters()).dtype
    if isinstance(batch, torch.Tensor):
        return batch.to(dtype)
    if isinstance(batch, (list, tuple)) and batch and isinstance(
            batch[0], enc_base.EmbeddingSequence):
        batch, _labels = enc_base.stack(batch)
    return torch.as_tensor(np.asarray(batch), dtype=dtype)


def forward(model, batch):
    """(N, 2) class probabilities, short then long, in inference mode."""
    inputs = as_tensor(batch, model)
    if inputs.ndim != 3:
        raise exceptions.DimensionMismatch(
            got=tuple(inputs.shape), expected=_('(batch, time, features)'))
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            probs = torch.softmax(model(inputs), dim=-1)
    finally:
        model.train(was_training)
    return probs.cpu().numpy()
