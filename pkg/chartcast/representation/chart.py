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

"""Technical chart images.

A window of hourly bars is drawn as four polylines (close, open, high, low)
on a white background with light gray horizontal gridlines at every
multiple of the grid spacing. Geometry is computed in integer tenths of a
pip relative to the window minimum, so shifting a window by a whole number
of grid periods yields the same raster.
"""

import dataclasses
import datetime
import io
import math
import os

import numpy as np
from oslo_config import cfg
from oslo_log import log as logging
from PIL import Image
from PIL import ImageDraw

from chartcast.common import exceptions
from chartcast.common import utils
from chartcast.i18n import _
from chartcast import market_data

LOG = logging.getLogger(__name__)

WHITE = (255, 255, 255)
BLACK = (0, 0, 0)
LIGHT_GRAY = (211, 211, 211)
# Prices are snapped to this many steps per pip.
TICKS_PER_PIP = 10
# Order in which series are drawn; close ends on top.
DRAW_ORDER = ('low', 'high', 'open', 'close')


@dataclasses.dataclass(frozen=True)
class SeriesStyle:
    width: int
    dash: tuple = ()
    color: tuple = BLACK


DEFAULT_STYLES = {
    'close': SeriesStyle(width=3),
    'open': SeriesStyle(width=1),
    'high': SeriesStyle(width=1, dash=(6, 4)),
    'low': SeriesStyle(width=1, dash=(1, 3)),
}


@dataclasses.dataclass(frozen=True)
class RenderConfig:
    width: int = 224
    height: int = 224
    window_hours: int = 20
    grid_spacing: float = 20.0
    padding_fraction: float = 0.05
    min_padding: float = 10.0
    margin: int = 4
    styles: dict = dataclasses.field(
        default_factory=lambda: dict(DEFAULT_STYLES))
    grid_color: tuple = LIGHT_GRAY
    background: tuple = WHITE

    def __post_init__(self):
        if set(self.styles) != set(DRAW_ORDER):
            raise exceptions.ConfigError(
                reason=_('chart styles must cover %s') % ', '.join(DRAW_ORDER))
        styles = list(self.styles.values())
        if len(set(styles)) != len(styles):
            raise exceptions.ConfigError(
                reason=_('chart series styles must be pairwise distinct'))
        if min(self.width, self.height) <= 2 * self.margin + 1:
            raise exceptions.ConfigError(
                reason=_('chart margin leaves no room to draw'))

    @classmethod
    def from_conf(cls, conf=None):
        group = (conf or cfg.CONF).render
        return cls(width=group.width, height=group.height,
                   window_hours=group.window_hours,
                   grid_spacing=group.grid_spacing,
                   padding_fraction=group.padding_fraction,
                   min_padding=group.min_padding,
                   margin=group.margin)

    def to_dict(self):
        data = dataclasses.asdict(self)
        data['styles'] = {name: dataclasses.asdict(style)
                          for name, style in self.styles.items()}
        return data


@dataclasses.dataclass(frozen=True)
class ChartImage:
    pixels: np.ndarray
    window_start: datetime.datetime
    window_end: datetime.datetime
    window_hours: int
    value_range: tuple

    def to_pil(self):
        return Image.fromarray(self.pixels)

    def to_png(self):
        buf = io.BytesIO()
        self.to_pil().save(buf, format='PNG')
        return buf.getvalue()


def _ticks(price):
    return int(round(price * TICKS_PER_PIP))


def _div_round(num, den):
    # Round-half-up integer division for den > 0.
    return (2 * num + den) // (2 * den)


class _Canvas:

    def __init__(self, config, view_low, view_high):
        self.config = config
        self.view_low = view_low
        self.view_high = view_high
        self.image = Image.new('RGB', (config.width, config.height),
                               config.background)
        self.draw = ImageDraw.Draw(self.image)

    def y(self, value):
        span = self.view_high - self.view_low
        plot = self.config.height - 1 - 2 * self.config.margin
        return self.config.margin + _div_round(
            (self.view_high - value) * plot, span)

    def x(self, index, count):
        plot = self.config.width - 1 - 2 * self.config.margin
        return self.config.margin + _div_round(index * plot, count - 1)

    def gridlines(self, spacing):
        first = -((-self.view_low) // spacing) * spacing
        rows = []
        for value in range(first, self.view_high + 1, spacing):
            row = self.y(value)
            self.draw.line([(0, row), (self.config.width - 1, row)],
                           fill=self.config.grid_color, width=1)
            rows.append(row)
        return rows

    def polyline(self, points, style):
        if not style.dash:
            self.draw.line(points, fill=style.color, width=style.width)
            return
        on = True
        pattern = list(style.dash)
        slot = 0
        left = float(pattern[0])
        for (x0, y0), (x1, y1) in zip(points, points[1:]):
            length = math.hypot(x1 - x0, y1 - y0)
            done = 0.0
            while done < length:
                step = min(left, length - done)
                if on:
                    a = done / length
                    b = (done + step) / length
                    self.draw.line(
                        [(round(x0 + (x1 - x0) * a),
                          round(y0 + (y1 - y0) * a)),
                         (round(x0 + (x1 - x0) * b),
                          round(y0 + (y1 - y0) * b))],
                        fill=style.color, width=style.width)
                done += step
                left -= step
                if left <= 0:
                    slot = (slot + 1) % len(pattern)
                    on = not on
                    left = float(pattern[slot])


def value_view(window, config):
    """Visible value range of a window in ticks, padding included."""
    ticks = np.rint(window.features * TICKS_PER_PIP).astype(np.int64)
    low = int(ticks.min())
    high = int(ticks.max())
    if high > low:
        pad = _ticks(config.padding_fraction * (high - low) / TICKS_PER_PIP)
    else:
        pad = _ticks(config.min_padding)
    return low - pad, high + pad


def render_chart(window, config=None):
    config = config or RenderConfig()
    if len(window) != config.window_hours:
        raise exceptions.WindowLengthError(got=len(window),
                                           expected=config.window_hours)
    view_low, view_high = value_view(window, config)
    canvas = _Canvas(config, view_low, view_high)
    canvas.gridlines(_ticks(config.grid_spacing))

    count = len(window)
    for name in DRAW_ORDER:
        points = [(canvas.x(i, count), canvas.y(_ticks(getattr(bar, name))))
                  for i, bar in enumerate(window)]
        canvas.polyline(points, config.styles[name])

    pixels = np.asarray(canvas.image, dtype=np.uint8).copy()
    return ChartImage(pixels=pixels,
                      window_start=window[0].timestamp,
                      window_end=window[-1].timestamp,
                      window_hours=count,
                      value_range=(view_low / TICKS_PER_PIP,
                                   view_high / TICKS_PER_PIP))


def gridline_rows(pixels, color=LIGHT_GRAY):
    """Rows whose first column carries the gridline color."""
    column = np.asarray(pixels)[:, 0, :]
    return [int(row) for row in
            np.flatnonzero((column == np.asarray(color)).all(axis=1))]


def chart_filename(image):
    return '%s_%dh.png' % (image.window_end.strftime('%Y%m%dT%H%M%S'),
                           image.window_hours)


def save_chart(directory, image):
    path = os.path.join(directory, chart_filename(image))
    utils.atomic_write(path, image.to_png())
    return path


def render_anchors(series, samples, directory, config=None):
    """Render the chart ending at every sample anchor with full history.

    Returns the manifest records written to ``manifest.jsonl``.
    """
    config = config or RenderConfig()
    utils.ensure_dir(directory)
    manifest = []
    skipped = 0
    for sample in samples:
        start = sample.anchor_index - config.window_hours + 1
        if start < 0:
            skipped += 1
            continue
        image = render_chart(series[start:sample.anchor_index + 1], config)
        path = save_chart(directory, image)
        manifest.append({
            'anchor_ts': market_data.format_ts(sample.anchor_ts),
            'file': os.path.basename(path),
            'value_range': list(image.value_range),
            'label': sample.label})
    if skipped:
        LOG.warning('Skipped %(count)d anchors without %(hours)d hours of '
                    'history', {'count': skipped,
                                'hours': config.window_hours})
    utils.write_jsonl(os.path.join(directory, 'manifest.jsonl'), manifest)
    return manifest
