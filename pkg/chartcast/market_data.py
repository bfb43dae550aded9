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

"""Hourly OHLC series: ingestion, chronological splits, labels, statistics.

Prices are expressed in pip. Offsets used by label schemes count positions
in the series, not wall-clock hours, so weekend gaps are skipped over.
"""

import dataclasses
import datetime
import functools
import math
import os
import re

import numpy as np
from oslo_log import log as logging
from oslo_serialization import jsonutils
import pandas as pd

from chartcast.common import constants
from chartcast.common import exceptions
from chartcast.common import utils
from chartcast.i18n import _

LOG = logging.getLogger(__name__)

# Absorbs binary rounding of fraction * length before flooring.
SPLIT_EPSILON = 1e-9
# Line number in pandas tokenizer errors.
PARSER_LINE_RE = re.compile(r'\bline (\d+)')
# Series file written by ingestion.
SERIES_FILE = 'series.csv'
SYNTHETIC_START = datetime.datetime(2020, 4, 21, 2, 0, 0)
SYNTHETIC_START_PRICE = 10000.0
# Smallest price a synthetic bar may take.
SYNTHETIC_PRICE_FLOOR = 0.1


def format_ts(timestamp):
    return timestamp.strftime(constants.TIMESTAMP_FORMAT)


def parse_ts(value):
    return datetime.datetime.strptime(value, constants.TIMESTAMP_FORMAT)


@dataclasses.dataclass(frozen=True)
class OhlcBar:
    timestamp: datetime.datetime
    open: float
    high: float
    low: float
    close: float

    def __post_init__(self):
        prices = (self.open, self.high, self.low, self.close)
        if not all(math.isfinite(p) and p > 0 for p in prices):
            raise exceptions.ValidationError(
                reason=_('prices must be finite and positive at %s') %
                format_ts(self.timestamp))
        if (self.low > min(self.open, self.close) or
                self.high < max(self.open, self.close)):
            raise exceptions.ValidationError(
                reason=_('high/low inversion at %s') %
                format_ts(self.timestamp))

    def features(self):
        """Prices in the fixed numeric feature order."""
        return tuple(getattr(self, name) for name in constants.FEATURE_ORDER)


@dataclasses.dataclass(frozen=True)
class OhlcSeries:
    bars: tuple

    def __post_init__(self):
        object.__setattr__(self, 'bars', tuple(self.bars))
        stamps = [bar.timestamp for bar in self.bars]
        bad = [format_ts(b) for a, b in zip(stamps, stamps[1:]) if b <= a]
        if bad:
            raise exceptions.ValidationError(
                reason=_('timestamps not strictly increasing at %s') %
                ', '.join(bad))

    def __len__(self):
        return len(self.bars)

    def __getitem__(self, item):
        if isinstance(item, slice):
            return OhlcSeries(self.bars[item])
        return self.bars[item]

    def __iter__(self):
        return iter(self.bars)

    @functools.cached_property
    def closes(self):
        return np.array([bar.close for bar in self.bars], dtype=np.float64)

    @functools.cached_property
    def features(self):
        """(N, 4) array in the fixed feature order."""
        if not self.bars:
            return np.zeros((0, len(constants.FEATURE_ORDER)))
        return np.array([bar.features() for bar in self.bars],
                        dtype=np.float64)

    @property
    def timestamps(self):
        return [bar.timestamp for bar in self.bars]

    def to_frame(self):
        return pd.DataFrame(
            {'timestamp': [format_ts(bar.timestamp) for bar in self.bars],
             'open': [bar.open for bar in self.bars],
             'high': [bar.high for bar in self.bars],
             'low': [bar.low for bar in self.bars],
             'close': [bar.close for bar in self.bars]},
            columns=list(constants.CSV_COLUMNS))


@dataclasses.dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.6
    validation_fraction: float = 0.2
    test_fraction: float = 0.2

    def __post_init__(self):
        fractions = (self.train_fraction, self.validation_fraction,
                     self.test_fraction)
        if any(f <= 0 for f in fractions):
            raise exceptions.ConfigError(
                reason=_('split fractions must be positive, got %s') %
                (fractions,))
        if abs(math.fsum(fractions) - 1.0) > SPLIT_EPSILON:
            raise exceptions.ConfigError(
                reason=_('split fractions must sum to 1, got %s') %
                (fractions,))


@dataclasses.dataclass(frozen=True)
class LabelScheme:
    name: str
    entry_offset: int
    exit_offset: int

    def __post_init__(self):
        if self.exit_offset - self.entry_offset != (
                constants.TRADE_HORIZON_HOURS):
            raise exceptions.ConfigError(
                reason=_('label scheme %s does not hold trades for %d '
                         'hours') % (self.name,
                                     constants.TRADE_HORIZON_HOURS))

    @classmethod
    def from_name(cls, name):
        if name == constants.SCHEME_STANDARD:
            return cls(name, 0, constants.TRADE_HORIZON_HOURS)
        if name == constants.SCHEME_DELAYED:
            return cls(name, 1, constants.TRADE_HORIZON_HOURS + 1)
        raise exceptions.ConfigChoiceError(
            value=name, key='scheme',
            choices=', '.join(constants.LABEL_SCHEMES), hint='')


STANDARD = LabelScheme.from_name(constants.SCHEME_STANDARD)
DELAYED = LabelScheme.from_name(constants.SCHEME_DELAYED)


@dataclasses.dataclass(frozen=True)
class LabeledSample:
    anchor_index: int
    anchor_ts: datetime.datetime
    label: int
    delta: float
    scheme: str

    def to_dict(self):
        return {'anchor_ts': format_ts(self.anchor_ts),
                'scheme': self.scheme,
                'delta': self.delta,
                'label': self.label}


@dataclasses.dataclass(frozen=True)
class DatasetStatistics:
    positive_fraction: float
    max_positive_delta: float
    max_negative_delta: float
    mean_delta: float
    std_delta: float
    n: int

    def to_dict(self):
        data = dataclasses.asdict(self)
        data['std_kind'] = constants.STD_KIND
        return data


def _row_error(path, frame, mask, reason):
    first = int(np.flatnonzero(mask.to_numpy())[0])
    # Header is row 1.
    raise exceptions.ParseError(row=first + 2, path=path,
                                reason=reason % frame.iloc[first].to_dict())


def _decode_line(raw):
    return raw.decode('utf-8')


def _decode_record(raw):
    line = raw.decode('utf-8').strip()
    if line:
        jsonutils.loads(line)


def _first_bad_line(path, check):
    """Number of the first line ``check`` rejects, counted from 1."""
    with open(path, 'rb') as handle:
        for number, raw in enumerate(handle, 1):
            try:
                check(raw)
            except ValueError:
                return number
    return None


def _width_check(path):
    with open(path, 'rb') as handle:
        width = handle.readline().count(b',')

    def check(raw):
        if raw.strip() and raw.count(b',') != width:
            raise ValueError(raw)
    return check


def _csv_error_row(path, error):
    if isinstance(error, UnicodeDecodeError):
        return _first_bad_line(path, _decode_line)
    match = PARSER_LINE_RE.search(str(error))
    if match:
        # pandas counts file lines from 1 with the header on line 1, which
        # is also our row numbering.
        return int(match.group(1))
    return _first_bad_line(path, _width_check(path))


def _read_csv(path):
    try:
        return pd.read_csv(path, dtype=str, skipinitialspace=True,
                           keep_default_na=False, encoding='utf-8')
    except pd.errors.EmptyDataError:
        raise exceptions.NoRows(path=path)
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise exceptions.ParseError(row=_csv_error_row(path, e), path=path,
                                    reason=str(e).strip())


def _read_records(path):
    try:
        records = utils.read_jsonl(path)
    except ValueError as e:
        # JSON and UTF-8 decoding errors are both ValueError.
        raise exceptions.ParseError(
            row=_first_bad_line(path, _decode_record), path=path,
            reason=str(e))
    return pd.DataFrame.from_records(records).astype(str)


def _read_frame(path, fmt):
    readers = {'csv': _read_csv, 'jsonl': _read_records}
    if fmt not in readers:
        raise exceptions.ConfigChoiceError(value=fmt, key='format',
                                           choices='csv, jsonl', hint='')
    try:
        frame = readers[fmt](path)
    except OSError as e:
        raise exceptions.DataError(
            reason=_('cannot read %(path)s: %(error)s') %
            {'path': path, 'error': e.strerror or e})
    frame.columns = [str(col).strip().lower() for col in frame.columns]
    missing = [col for col in constants.CSV_COLUMNS
               if col not in frame.columns]
    if missing and not frame.empty:
        raise exceptions.ParseError(
            row=1, path=path,
            reason=_('missing columns %s') % ', '.join(missing))
    if frame.empty:
        raise exceptions.NoRows(path=path)
    return frame


def ingest(path, fmt='csv'):
    """Read an OHLC file into a validated, time-sorted series."""
    frame = _read_frame(path, fmt)
    stamps = pd.to_datetime(frame['timestamp'].str.strip(),
                            format=constants.TIMESTAMP_FORMAT,
                            errors='coerce')
    if stamps.isna().any():
        _row_error(path, frame, stamps.isna(),
                   _('bad timestamp %(timestamp)s'))
    prices = {}
    for column in constants.FEATURE_ORDER:
        values = pd.to_numeric(frame[column].str.strip(), errors='coerce')
        if values.isna().any():
            _row_error(path, frame, values.isna(),
                       _('bad %s value %%(%s)s') % (column, column))
        prices[column] = values.to_numpy(dtype=np.float64)

    table = pd.DataFrame(prices)
    table.insert(0, 'timestamp', stamps)
    table = table.sort_values('timestamp', kind='stable')
    ts_text = table['timestamp'].dt.strftime(constants.TIMESTAMP_FORMAT)

    values = table[list(constants.FEATURE_ORDER)].to_numpy()
    invalid = ~(np.isfinite(values) & (values > 0)).all(axis=1)
    if invalid.any():
        raise exceptions.ValidationError(
            reason=_('non-positive or non-finite prices at %s') %
            ', '.join(ts_text[invalid]))
    inverted = ((table['low'] > table[['open', 'close']].min(axis=1)) |
                (table['high'] < table[['open', 'close']].max(axis=1)))
    if inverted.any():
        raise exceptions.ValidationError(
            reason=_('high/low inversion at %s') %
            ', '.join(ts_text[inverted]))
    duplicated = table['timestamp'].duplicated(keep=False)
    if duplicated.any():
        raise exceptions.ValidationError(
            reason=_('duplicate timestamps %s') %
            ', '.join(sorted(set(ts_text[duplicated]))))

    bars = [OhlcBar(row.timestamp.to_pydatetime(), row.open, row.high,
                    row.low, row.close)
            for row in table.itertuples(index=False)]
    LOG.info('Ingested %(count)d bars from %(path)s',
             {'count': len(bars), 'path': path})
    return OhlcSeries(bars)


def write_series(path, series):
    utils.ensure_dir(os.path.dirname(os.path.abspath(path)))
    series.to_frame().to_csv(path, index=False)


def split(series, spec=None):
    """Chronological train/validation/test partition.

    Boundaries are the floor of the cumulative fractions, so ten bars with
    the default fractions give sizes (6, 2, 2).
    """
    spec = spec or SplitSpec()
    total = len(series)
    if total < 3:
        raise exceptions.ValidationError(
            reason=_('a series of %d bars cannot be split') % total)
    train_end = math.floor(spec.train_fraction * total + SPLIT_EPSILON)
    validation_end = math.floor(
        (spec.train_fraction + spec.validation_fraction) * total +
        SPLIT_EPSILON)
    parts = (series[:train_end], series[train_end:validation_end],
             series[validation_end:])
    if any(len(part) == 0 for part in parts):
        raise exceptions.ValidationError(
            reason=_('split of %(total)d bars leaves an empty part '
                     '(%(sizes)s)') % {
                'total': total,
                'sizes': ', '.join(str(len(p)) for p in parts)})
    return parts


def label(series, scheme):
    """One sample per anchor whose exit bar exists in the series."""
    count = len(series) - scheme.exit_offset
    if count <= 0:
        return []
    closes = series.closes
    anchors = np.arange(count)
    deltas = (closes[anchors + scheme.exit_offset] -
              closes[anchors + scheme.entry_offset])
    stamps = series.timestamps
    return [LabeledSample(anchor_index=int(t),
                          anchor_ts=stamps[t],
                          label=(constants.LABEL_LONG if delta > 0
                                 else constants.LABEL_SHORT),
                          delta=float(delta),
                          scheme=scheme.name)
            for t, delta in zip(anchors, deltas)]


def statistics(samples):
    if not samples:
        raise exceptions.NoSamples()
    deltas = np.array([sample.delta for sample in samples], dtype=np.float64)
    positive = int(np.count_nonzero(deltas > 0))
    return DatasetStatistics(
        positive_fraction=100.0 * positive / len(deltas),
        max_positive_delta=float(max(deltas.max(), 0.0)),
        max_negative_delta=float(min(deltas.min(), 0.0)),
        mean_delta=math.fsum(deltas) / len(deltas),
        std_delta=float(np.std(deltas, ddof=0)),
        n=len(deltas))


def split_statistics(parts, scheme):
    """Statistics of each split, each labeled on its own."""
    names = ('train', 'validation', 'test')
    return {name: statistics(label(part, scheme))
            for name, part in zip(names, parts)}


_TABLE_ROWS = (
    ('Positive deltas [%]', 'positive_fraction'),
    ('Max positive delta', 'max_positive_delta'),
    ('Max negative delta', 'max_negative_delta'),
    ('Mean delta', 'mean_delta'),
    ('Std delta', 'std_delta'),
)


def render_statistics_table(stats_by_split, title=None):
    columns = list(stats_by_split)
    header = ['Statistic'] + [c.capitalize() for c in columns]
    rows = [header]
    for caption, field in _TABLE_ROWS:
        rows.append([caption] + ['%.2f' % getattr(stats_by_split[c], field)
                                 for c in columns])
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = [title] if title else []
    for row in rows:
        lines.append('  '.join(
            cell.ljust(widths[i]) if i == 0 else cell.rjust(widths[i])
            for i, cell in enumerate(row)))
    return '\n'.join(lines) + '\n'


def generate_synthetic(seed, n_bars, volatility,
                       start_price=SYNTHETIC_START_PRICE):
    """Seeded random-walk series of weekday hourly bars.

    Close-to-close increments are normal with standard deviation
    ``volatility`` pip; each bar opens at the previous close and its wicks
    extend by half-normal excursions of half that size. Prices are rounded
    to one decimal.
    """
    if n_bars < 1:
        raise exceptions.ConfigError(
            reason=_('synthetic series needs at least one bar'))
    rng = np.random.default_rng(seed)
    increments = rng.normal(0.0, volatility, n_bars)
    wick_up = np.abs(rng.normal(0.0, volatility / 2.0, n_bars))
    wick_down = np.abs(rng.normal(0.0, volatility / 2.0, n_bars))

    closes = np.maximum(start_price + np.cumsum(increments),
                        SYNTHETIC_PRICE_FLOOR)
    opens = np.concatenate(([start_price], closes[:-1]))
    closes = np.round(closes, 1)
    opens = np.round(opens, 1)
    highs = np.round(np.maximum(opens, closes) + wick_up, 1)
    lows = np.round(np.minimum(opens, closes) - wick_down, 1)
    highs = np.maximum(highs, np.maximum(opens, closes))
    lows = np.maximum(np.minimum(lows, np.minimum(opens, closes)),
                      SYNTHETIC_PRICE_FLOOR)

    hours = pd.date_range(SYNTHETIC_START, periods=n_bars * 2 + 48,
                          freq='h')
    hours = hours[hours.dayofweek < 5][:n_bars]
    bars = [OhlcBar(stamp.to_pydatetime(), float(o), float(h), float(lo),
                    float(c))
            for stamp, o, h, lo, c in zip(hours, opens, highs, lows, closes)]
    return OhlcSeries(bars)


def write_samples(path, samples):
    utils.write_jsonl(path, [sample.to_dict() for sample in samples])


def read_samples(path, series):
    """Load samples written by write_samples, re-indexed into ``series``."""
    index = {bar.timestamp: i for i, bar in enumerate(series)}
    samples = []
    for record in utils.read_jsonl(path):
        anchor_ts = parse_ts(record['anchor_ts'])
        if anchor_ts not in index:
            raise exceptions.MisalignedAnchors(
                reason=_('anchor %s is not in the series') %
                record['anchor_ts'])
        samples.append(LabeledSample(anchor_index=index[anchor_ts],
                                     anchor_ts=anchor_ts,
                                     label=int(record['label']),
                                     delta=float(record['delta']),
                                     scheme=record['scheme']))
    return samples


def statistics_dict(stats):
    """JSON form of one DatasetStatistics or of a split name mapping."""
    if isinstance(stats, DatasetStatistics):
        return stats.to_dict()
    return {'splits': {name: s.to_dict() for name, s in stats.items()}}


def write_statistics(path, stats, **provenance):
    data = statistics_dict(stats)
    data.update(provenance)
    utils.write_json(path, data)
