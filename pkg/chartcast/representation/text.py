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

"""Technical text records.

One bar becomes ``Date:DD/MM/YYYY Time:HH Close:c Open:o High:h Low:l`` with
every price printed with exactly one decimal and no thousands separator.
"""

import dataclasses
import datetime
import re

from chartcast.common import exceptions
from chartcast.i18n import _
from chartcast import market_data

_GRAMMAR = re.compile(
    r'^Date:(?P<day>\d{2})/(?P<month>\d{2})/(?P<year>\d{4}) '
    r'Time:(?P<hour>\d{2}) '
    r'Close:(?P<close>\d+\.\d) Open:(?P<open>\d+\.\d) '
    r'High:(?P<high>\d+\.\d) Low:(?P<low>\d+\.\d)$')


@dataclasses.dataclass(frozen=True)
class TextRecord:
    text: str

    def __str__(self):
        return self.text


def serialize_text(bar):
    ts = bar.timestamp
    return TextRecord(
        'Date:%02d/%02d/%04d Time:%02d Close:%.1f Open:%.1f High:%.1f '
        'Low:%.1f' % (ts.day, ts.month, ts.year, ts.hour, bar.close,
                      bar.open, bar.high, bar.low))


def parse_text(record):
    text = record.text if isinstance(record, TextRecord) else record
    match = _GRAMMAR.match(text)
    if not match:
        raise exceptions.ValidationError(
            reason=_('not a technical text record: %s') % text)
    parts = match.groupdict()
    timestamp = datetime.datetime(int(parts['year']), int(parts['month']),
                                  int(parts['day']), int(parts['hour']))
    return market_data.OhlcBar(timestamp=timestamp,
                               open=float(parts['open']),
                               high=float(parts['high']),
                               low=float(parts['low']),
                               close=float(parts['close']))
