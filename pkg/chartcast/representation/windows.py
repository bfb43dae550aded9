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
import datetime

import numpy as np
from oslo_log import log as logging

from chartcast.common import constants
from chartcast.common import exceptions
from chartcast.i18n import _
from chartcast.representation import normalizer as norm
from chartcast.representation import text

LOG = logging.getLogger(__name__)

DEFAULT_FRAME_HOURS = 20

_SEQUENCE_LENGTHS = {
    constants.WINDOW_NUMERIC24: 24,
    constants.WINDOW_NUMERIC48: 48,
    constants.WINDOW_IMAGE5X20: constants.IMAGE_SEQUENCE_LENGTH,
    constants.WINDOW_TEXT24: 24,
}
WINDOW_KINDS = tuple(_SEQUENCE_LENGTHS)


def sequence_length(kind):
    """Number of items the encoder emits for a window of ``kind``."""
    try:
        return _SEQUENCE_LENGTHS[kind]
    except KeyError:
        raise exceptions.ConfigChoiceError(
            value=kind, key='window kind', choices=', '.join(WINDOW_KINDS),
            hint='')


def history_hours(kind, frame_hours=DEFAULT_FRAME_HOURS):
    """Bars needed up to and including the anchor."""
    if kind == constants.WINDOW_IMAGE5X20:
        return frame_hours + constants.IMAGE_SEQUENCE_LENGTH - 1
    return sequence_length(kind)


@dataclasses.dataclass(frozen=True)
class ModelInputWindow:
    kind: str
    anchor_index: int
    anchor_ts: datetime.datetime
    label: int
    bars: object
    values: np.ndarray = None
    frames: tuple = ()
    texts: tuple = ()

    @property
    def last_bar(self):
        return self.bars[-1]


@dataclasses.dataclass(frozen=True)
class WindowSet:
    kind: str
    windows: tuple
    dropped: tuple

    def __len__(self):
        return len(self.windows)

    def __iter__(self):
        return iter(self.windows)

    @property
    def labels(self):
        return np.array([w.label for w in self.windows], dtype=np.int64)


def make_windows(series, anchors, kind, params=None,
                 frame_hours=DEFAULT_FRAME_HOURS):
    """Build model inputs ending at each anchor (inclusive).

    Numeric windows carry ``values``, z-scored with ``params`` when given
    and raw prices otherwise. Anchors without enough history are dropped
    and reported in ``WindowSet.dropped``.
    """
    need = history_hours(kind, frame_hours)
    windows = []
    dropped = []
    for sample in anchors:
        end = sample.anchor_index + 1
        start = end - need
        if start < 0 or end > len(series):
            dropped.append(sample.anchor_ts)
            continue
        if series[sample.anchor_index].timestamp != sample.anchor_ts:
            raise exceptions.MisalignedAnchors(
                reason=_('anchor %(index)d is not at %(ts)s') % {
                    'index': sample.anchor_index, 'ts': sample.anchor_ts})
        bars = series[start:end]
        fields = {}
        if kind in (constants.WINDOW_NUMERIC24, constants.WINDOW_NUMERIC48):
            values = bars.features
            if params is not None:
                values = norm.normalize_array(values, params)
            fields['values'] = np.array(values, dtype=np.float64)
        elif kind == constants.WINDOW_IMAGE5X20:
            fields['frames'] = tuple(
                bars[k:k + frame_hours]
                for k in range(constants.IMAGE_SEQUENCE_LENGTH))
        else:
            fields['texts'] = tuple(text.serialize_text(bar) for bar in bars)
        windows.append(ModelInputWindow(kind=kind,
                                        anchor_index=sample.anchor_index,
                                        anchor_ts=sample.anchor_ts,
                                        label=sample.label,
                                        bars=bars, **fields))
    if dropped:
        LOG.warning('Dropped %(count)d anchors lacking %(need)d hours of '
                    'history for %(kind)s windows',
                    {'count': len(dropped), 'need': need, 'kind': kind})
    return WindowSet(kind=kind, windows=tuple(windows),
                     dropped=tuple(dropped))
