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

"""Trade ledger and the direction metric suite.

Long is the positive class. Ratios whose denominator is zero are reported
as 0, and balanced accuracy averages only the recall terms that are
defined, so constant strategies get fixed, finite rows.
"""

import dataclasses
import datetime
import math

import numpy as np
from oslo_log import log as logging

from chartcast.common import constants
from chartcast.common import exceptions
from chartcast.i18n import _
from chartcast import market_data

LOG = logging.getLogger(__name__)

METRIC_FIELDS = ('f1', 'mcc', 'balanced_acc', 'precision_short',
                 'precision_long', 'pip_short', 'pip_long')
TABLE_HEADERS = ('Models', 'F1', 'MCC', 'Balanced ACC', 'Precision (Short)',
                 'Precision (Long)', 'Pip Balance (Short)',
                 'Pip Balance (Long)')
SECTION_TITLES = {
    constants.SCHEME_STANDARD: 'Standard Label',
    constants.SCHEME_DELAYED: 'Delayed Label',
}


@dataclasses.dataclass(frozen=True)
class TradeRecord:
    anchor: datetime.datetime
    direction: int
    entry_price: float
    exit_price: float
    pnl: float


@dataclasses.dataclass(frozen=True)
class Ledger:
    trades: tuple
    dropped: int = 0

    def __len__(self):
        return len(self.trades)


@dataclasses.dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise exceptions.ValidationError(
                reason=_('confusion counts must be non-negative'))

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclasses.dataclass(frozen=True)
class MetricsReport:
    f1: float
    mcc: float
    balanced_acc: float
    precision_short: float
    precision_long: float
    pip_short: float
    pip_long: float
    counts: ConfusionCounts = None
    scheme: str = None
    dropped: int = 0

    def to_dict(self):
        data = {name: getattr(self, name) for name in METRIC_FIELDS}
        data['counts'] = self.counts.to_dict() if self.counts else None
        data['scheme'] = self.scheme
        data['dropped'] = self.dropped
        return data

    @classmethod
    def from_dict(cls, data):
        counts = data.get('counts')
        return cls(counts=ConfusionCounts(**counts) if counts else None,
                   scheme=data.get('scheme'),
                   dropped=data.get('dropped', 0),
                   **{name: float(data[name]) for name in METRIC_FIELDS})


def build_ledger(decisions, series, scheme):
    """One trade per decision whose entry and exit bars exist."""
    index = {bar.timestamp: i for i, bar in enumerate(series)}
    closes = series.closes
    trades = []
    dropped = 0
    for decision in decisions:
        position = index.get(decision.anchor)
        if (position is None or
                position + scheme.exit_offset >= len(series)):
            dropped += 1
            continue
        entry = float(closes[position + scheme.entry_offset])
        exit_ = float(closes[position + scheme.exit_offset])
        pnl = (exit_ - entry if decision.direction == constants.LABEL_LONG
               else entry - exit_)
        trades.append(TradeRecord(anchor=decision.anchor,
                                  direction=decision.direction,
                                  entry_price=entry, exit_price=exit_,
                                  pnl=pnl))
    if dropped:
        LOG.warning('Dropped %(count)d decisions without exit bars under '
                    'the %(scheme)s scheme',
                    {'count': dropped, 'scheme': scheme.name})
    return Ledger(trades=tuple(trades), dropped=dropped)


def confusion_from_arrays(predictions, labels):
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise exceptions.MisalignedAnchors(
            reason=_('%(p)d predictions for %(l)d labels') % {
                'p': predictions.size, 'l': labels.size})
    return ConfusionCounts(
        tp=int(np.sum((predictions == 1) & (labels == 1))),
        fp=int(np.sum((predictions == 1) & (labels == 0))),
        tn=int(np.sum((predictions == 0) & (labels == 0))),
        fn=int(np.sum((predictions == 0) & (labels == 1))))


def confusion(decisions, labels):
    """Counts for decisions paired one-to-one with labeled samples."""
    if len(decisions) != len(labels):
        raise exceptions.MisalignedAnchors(
            reason=_('%(d)d decisions for %(l)d labels') % {
                'd': len(decisions), 'l': len(labels)})
    for decision, sample in zip(decisions, labels):
        if decision.anchor != sample.anchor_ts:
            raise exceptions.MisalignedAnchors(
                reason=_('decision at %(d)s paired with label at %(l)s') % {
                    'd': market_data.format_ts(decision.anchor),
                    'l': market_data.format_ts(sample.anchor_ts)})
    return confusion_from_arrays([d.direction for d in decisions],
                                 [s.label for s in labels])


def _ratio(num, den):
    return num / den if den else 0.0


def f1_score(counts):
    return _ratio(counts.tp, counts.tp + 0.5 * (counts.fp + counts.fn))


def balanced_accuracy(counts):
    recalls = []
    if counts.tp + counts.fn:
        recalls.append(counts.tp / (counts.tp + counts.fn))
    if counts.tn + counts.fp:
        recalls.append(counts.tn / (counts.tn + counts.fp))
    return sum(recalls) / len(recalls) if recalls else 0.0


def matthews(counts):
    tp, fp, tn, fn = counts.tp, counts.fp, counts.tn, counts.fn
    denominator = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denominator == 0:
        return 0.0
    return (tp * tn - fp * fn) / math.sqrt(denominator)


def metrics(counts, ledger=None, scheme=None):
    if ledger is not None and len(ledger) != counts.total:
        raise exceptions.MisalignedAnchors(
            reason=_('%(c)d classified anchors but %(t)d trades') % {
                'c': counts.total, 't': len(ledger)})
    trades = ledger.trades if ledger is not None else ()
    return MetricsReport(
        f1=f1_score(counts),
        mcc=matthews(counts),
        balanced_acc=balanced_accuracy(counts),
        precision_short=100.0 * _ratio(counts.tn, counts.tn + counts.fn),
        precision_long=100.0 * _ratio(counts.tp, counts.tp + counts.fp),
        pip_short=math.fsum(t.pnl for t in trades
                            if t.direction == constants.LABEL_SHORT),
        pip_long=math.fsum(t.pnl for t in trades
                           if t.direction == constants.LABEL_LONG),
        counts=counts,
        scheme=getattr(scheme, 'name', scheme),
        dropped=ledger.dropped if ledger is not None else 0)


def evaluate(decisions, samples, series, scheme):
    """Ledger plus metrics over the decisions that could be traded."""
    ledger = build_ledger(decisions, series, scheme)
    traded = {trade.anchor for trade in ledger.trades}
    pairs = [(d, s) for d, s in zip(decisions, samples) if d.anchor in traded]
    counts = confusion([d for d, _s in pairs], [s for _d, s in pairs])
    return metrics(counts, ledger, scheme)


def mean_reports(reports):
    """Field-wise arithmetic mean; the result carries no counts."""
    reports = list(reports)
    if not reports:
        raise exceptions.NoSamples()
    schemes = {r.scheme for r in reports}
    return MetricsReport(
        scheme=schemes.pop() if len(schemes) == 1 else None,
        **{name: math.fsum(getattr(r, name) for r in reports) / len(reports)
           for name in METRIC_FIELDS})


def _format_row(name, report):
    return [name,
            '%.2f' % report.f1,
            '%.2f' % report.mcc,
            '%.2f' % report.balanced_acc,
            '%.2f' % report.precision_short,
            '%.2f' % report.precision_long,
            '%.2f' % report.pip_short,
            '%.2f' % report.pip_long]


def render_table(rows):
    """Aligned text table from (display name, report) pairs by section.

    ``rows`` maps a scheme name to an ordered list of pairs. Sections are
    emitted in scheme order; an empty mapping renders the header only.
    """
    cells = [list(TABLE_HEADERS)]
    layout = [('header', None)]
    for scheme in constants.LABEL_SCHEMES:
        if not rows.get(scheme):
            continue
        layout.append(('section', SECTION_TITLES[scheme]))
        for name, report in rows[scheme]:
            cells.append(_format_row(name, report))
            layout.append(('row', None))
    widths = [max(len(row[i]) for row in cells)
              for i in range(len(TABLE_HEADERS))]

    def line(row):
        return '  '.join(cell.ljust(widths[i]) if i == 0
                         else cell.rjust(widths[i])
                         for i, cell in enumerate(row)).rstrip()

    out = []
    body = iter(cells)
    for kind, title in layout:
        if kind == 'section':
            out.append(title)
        else:
            out.append(line(next(body)))
            if kind == 'header':
                out.append('-' * len(out[-1]))
    return '\n'.join(out) + '\n'
