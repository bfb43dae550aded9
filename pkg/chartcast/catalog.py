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

"""Model kinds known to the toolkit and how each one is assembled."""

import dataclasses

from chartcast.common import constants
from chartcast.common import exceptions
from chartcast.i18n import _

LSTM = 'lstm'
LSTM_LONG = 'lstm-long'
STACKED = 'stacked'
DAIN = 'dain'
CLIP_IMAGE = 'clip-image'
CLIP_TEXT = 'clip-text'
RANDOM_CLIP_IMAGE = 'random-clip-image'
RANDOM_CLIP_TEXT = 'random-clip-text'


@dataclasses.dataclass(frozen=True)
class ModelSpec:
    kind: str
    display_name: str
    window_kind: str
    encoder_kind: str
    num_layers: int = 1
    use_dain: bool = False
    random_init: bool = False

    @property
    def normalize_inputs(self):
        # DAIN consumes raw prices and learns its own normalization.
        return (self.encoder_kind == constants.ENCODER_IDENTITY and
                not self.use_dain)


_SPECS = (
    ModelSpec(LSTM, 'LSTM', constants.WINDOW_NUMERIC24,
              constants.ENCODER_IDENTITY),
    ModelSpec(LSTM_LONG, 'LSTM (long sequence)', constants.WINDOW_NUMERIC48,
              constants.ENCODER_IDENTITY),
    ModelSpec(STACKED, 'Stacked-LSTM (long sequence)',
              constants.WINDOW_NUMERIC48, constants.ENCODER_IDENTITY,
              num_layers=2),
    ModelSpec(DAIN, 'DAIN-LSTM', constants.WINDOW_NUMERIC48,
              constants.ENCODER_IDENTITY, use_dain=True),
    ModelSpec(CLIP_IMAGE, 'CLIP-LSTM (image)', constants.WINDOW_IMAGE5X20,
              constants.ENCODER_IMAGE),
    ModelSpec(CLIP_TEXT, 'CLIP-LSTM (text)', constants.WINDOW_TEXT24,
              constants.ENCODER_TEXT),
    ModelSpec(RANDOM_CLIP_IMAGE, 'Random CLIP-LSTM (image)',
              constants.WINDOW_IMAGE5X20, constants.ENCODER_IMAGE,
              random_init=True),
    ModelSpec(RANDOM_CLIP_TEXT, 'Random CLIP-LSTM (text)',
              constants.WINDOW_TEXT24, constants.ENCODER_TEXT,
              random_init=True),
)

MODELS = {spec.kind: spec for spec in _SPECS}
MODEL_KINDS = tuple(MODELS)


def get_model_spec(kind, stacked_layers=None):
    try:
        spec = MODELS[kind]
    except KeyError:
        raise exceptions.ConfigError(
            reason=_('unknown model kind %(kind)s, expected one of '
                     '%(kinds)s') % {'kind': kind,
                                     'kinds': ', '.join(MODEL_KINDS)})
    if stacked_layers and spec.num_layers > 1:
        spec = dataclasses.replace(spec, num_layers=stacked_layers)
    return spec
