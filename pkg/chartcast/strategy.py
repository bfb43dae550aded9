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

"""Reference strategies trading once per hour."""

import dataclasses
import datetime

import numpy as np

from chartcast.common import constants
from chartcast.common import exceptions
from chartcast.common import utils
from chartcast import market_data


@dataclasses.dataclass(frozen=True)
class StrategyDecision:
    anchor: datetime.datetime
    direction: int

    def to_dict(self):
        return {'anchor_ts': market_data.format_ts(self.anchor),
                'direction': self.direction}


def _anchor_ts(anchor):
    return getattr(anchor, 'anchor_ts', anchor)


def random_strategy(anchors, seed):
    # Own generator so training seeds never shift the coin flips.
    rng = np.random.default_rng(seed)
    flips = rng.integers(0, 2, size=len(anchors))
    return [StrategyDecision(_anchor_ts(a), int(f))
            for a, f in zip(anchors, flips)]


def always_long(anchors):
    return [StrategyDecision(_anchor_ts(a), constants.LABEL_LONG)
            for a in anchors]


def always_short(anchors):
    return [StrategyDecision(_anchor_ts(a), constants.LABEL_SHORT)
            for a in anchors]


def run_strategy(name, anchors, seed=0):
    if name == constants.STRATEGY_RANDOM:
        return random_strategy(anchors, seed)
    if name == constants.STRATEGY_LONG:
        return always_long(anchors)
    if name == constants.STRATEGY_SHORT:
        return always_short(anchors)
    raise exceptions.ConfigChoiceError(
        value=name, key='strategy', choices=', '.join(constants.STRATEGIES),
        hint='')


def decisions_from_probabilities(anchors, probabilities):
    """Long wherever the long-class probability exceeds the short one."""
    probabilities = np.asarray(probabilities)
    directions = (probabilities[:, constants.LABEL_LONG] >
                  probabilities[:, constants.LABEL_SHORT])
    return [StrategyDecision(_anchor_ts(a), int(d))
            for a, d in zip(anchors, directions)]


def write_decisions(path, decisions):
    utils.write_jsonl(path, [d.to_dict() for d in decisions])


def read_decisions(path):
    return [StrategyDecision(market_data.parse_ts(r['anchor_ts']),
                             int(r['direction']))
            for r in utils.read_jsonl(path)]
