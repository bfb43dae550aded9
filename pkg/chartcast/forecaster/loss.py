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

"""Class-weighted binary cross-entropy.

The short class (label 0) is weighted by ``1 + w * n_train`` where ``w`` is
the searched weighting parameter and ``n_train`` the training set size.
"""

import torch
from torch.nn import functional

from chartcast.common import exceptions
from chartcast.i18n import _

# Keeps log() finite for probabilities of exactly 0.
PROB_FLOOR = 1e-12


def short_weight(w, n_train):
    weight = 1.0 + w * n_train
    if weight <= 0:
        raise exceptions.ConfigError(
            reason=_('short class weight 1 + %(w)s * %(n)d = %(weight)s is '
                     'not positive') % {'w': w, 'n': n_train,
                                        'weight': weight})
    return weight


def class_weights(w, n_train, dtype=torch.float32):
    return torch.tensor([short_weight(w, n_train), 1.0], dtype=dtype)


def weighted_bce(probabilities, labels, w, n_train):
    """Mean weighted cross-entropy of (N, 2) probabilities."""
    probabilities = torch.as_tensor(probabilities)
    labels = torch.as_tensor(labels, dtype=torch.long)
    weights = class_weights(w, n_train, probabilities.dtype)[labels]
    picked = probabilities.gather(1, labels.unsqueeze(1)).squeeze(1)
    losses = -torch.log(torch.clamp(picked, min=PROB_FLOOR))
    return (weights * losses).mean()


def weighted_bce_logits(logits, labels, w, n_train):
    """weighted_bce on logits, used by the training loop."""
    weights = class_weights(w, n_train, logits.dtype)[labels]
    losses = functional.cross_entropy(logits, labels, reduction='none')
    return (weights * losses).mean()
