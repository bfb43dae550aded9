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

from chartcast.common import constants
from chartcast.common import exceptions
from chartcast.common import utils
from chartcast.i18n import _

SOURCE_TRAIN = 'train'


@dataclasses.dataclass(frozen=True)
class NormalizationParams:
    mean: tuple
    std: tuple
    source: str = SOURCE_TRAIN
    feature_order: tuple = constants.FEATURE_ORDER

    def __post_init__(self):
        for name, value in zip(self.feature_order, self.std):
            if not value > 0:
                raise exceptions.ZeroStdError(feature=name)

    @property
    def mean_array(self):
        return np.asarray(self.mean, dtype=np.float64)

    @property
    def std_array(self):
        return np.asarray(self.std, dtype=np.float64)

    def to_dict(self):
        return {'mean': list(self.mean), 'std': list(self.std),
                'source': self.source,
                'feature_order': list(self.feature_order),
                'std_kind': constants.STD_KIND}

    @classmethod
    def from_dict(cls, data):
        return cls(mean=tuple(data['mean']), std=tuple(data['std']),
                   source=data.get('source', SOURCE_TRAIN),
                   feature_order=tuple(data.get('feature_order',
                                                constants.FEATURE_ORDER)))


def fit_normalizer(train):
    """Per-feature mean and population std over the training bars."""
    if len(train) == 0:
        raise exceptions.ValidationError(
            reason=_('cannot fit a normalizer on an empty series'))
    features = train.features
    mean = features.mean(axis=0)
    std = features.std(axis=0, ddof=0)
    return NormalizationParams(mean=tuple(float(m) for m in mean),
                               std=tuple(float(s) for s in std))


def normalize(bar, params):
    return (np.asarray(bar.features(), dtype=np.float64) -
            params.mean_array) / params.std_array


def normalize_array(features, params):
    """Normalize an (..., 4) array of features in feature order."""
    return (np.asarray(features, dtype=np.float64) -
            params.mean_array) / params.std_array


def denormalize(vector, params):
    return np.asarray(vector, dtype=np.float64) * params.std_array + \
        params.mean_array


def save(path, params):
    utils.write_json(path, params.to_dict())


def load(path):
    return NormalizationParams.from_dict(utils.read_json(path))
