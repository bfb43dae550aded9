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
from oslo_config import cfg
from oslo_log import log as logging

from chartcast.common import constants
from chartcast.common import exceptions
from chartcast.encoder import cache as emb_cache
from chartcast.encoder import clip
from chartcast.i18n import _
from chartcast.representation import chart
from chartcast.representation import windows as win

LOG = logging.getLogger(__name__)

IDENTITY_DIM = len(constants.FEATURE_ORDER)

COMPATIBLE_WINDOWS = {
    constants.ENCODER_TEXT: (constants.WINDOW_TEXT24,),
    constants.ENCODER_IMAGE: (constants.WINDOW_IMAGE5X20,),
    constants.ENCODER_IDENTITY: (constants.WINDOW_NUMERIC24,
                                 constants.WINDOW_NUMERIC48),
}


@dataclasses.dataclass(frozen=True)
class Embedding:
    vector: np.ndarray

    @property
    def dim(self):
        return int(self.vector.shape[-1])


@dataclasses.dataclass(frozen=True)
class EmbeddingSequence:
    vectors: np.ndarray
    anchor: datetime.datetime
    label: int
    kind: str

    def __post_init__(self):
        if self.vectors.ndim != 2:
            raise exceptions.DimensionMismatch(got=self.vectors.shape,
                                               expected='(length, D)')

    @property
    def items(self):
        return [Embedding(vector) for vector in self.vectors]

    @property
    def length(self):
        return int(self.vectors.shape[0])

    @property
    def dim(self):
        return int(self.vectors.shape[1])


@dataclasses.dataclass(frozen=True)
class EncoderSpec:
    kind: str
    checkpoint_id: str = constants.DEFAULT_CHECKPOINT
    frozen: bool = True
    embedding_output: str = constants.EMBEDDING_PROJECTED
    random_init: bool = False
    seed: int = 0
    device: str = 'cpu'
    max_text_tokens: int = 77
    batch_size: int = 32

    def __post_init__(self):
        if self.kind not in constants.ENCODER_KINDS:
            raise exceptions.ConfigChoiceError(
                value=self.kind, key='encoder kind',
                choices=', '.join(constants.ENCODER_KINDS), hint='')
        if not self.frozen:
            raise exceptions.ConfigError(
                reason=_('encoders are frozen feature extractors'))

    @property
    def handle_key(self):
        # Text and image share one model per checkpoint and weights.
        return (self.checkpoint_id, self.random_init, self.seed,
                self.device, self.embedding_output, self.max_text_tokens)

    @property
    def variant(self):
        weights = ('random-%d' % self.seed if self.random_init
                   else 'pretrained')
        return '%s/%s/%s' % (self.kind, self.embedding_output, weights)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_conf(cls, kind, random_init=False, seed=0, conf=None):
        group = (conf or cfg.CONF).encoder
        return cls(kind=kind, checkpoint_id=group.checkpoint,
                   embedding_output=group.embedding_output,
                   random_init=random_init, seed=seed,
                   device=group.device,
                   max_text_tokens=group.max_text_tokens,
                   batch_size=group.batch_size)


def check_compatible(window_kind, spec):
    if window_kind not in COMPATIBLE_WINDOWS[spec.kind]:
        raise exceptions.KindMismatch(encoder=spec.kind, window=window_kind)


def _batched(items, size):
    for start in range(0, len(items), size):
        yield items[start:start + size]


def _encode_texts(texts, spec, handle, cache):
    handle = handle or clip.get_encoder(spec)

    def compute(indices):
        out = []
        for chunk in _batched([texts[i] for i in indices], spec.batch_size):
            out.append(handle.text_features(chunk))
        return np.concatenate(out)

    if cache is None:
        return list(compute(range(len(texts))))
    keys = [emb_cache.cache_key(spec.checkpoint_id, spec.variant,
                                text.encode('utf-8')) for text in texts]
    return cache.get_or_compute_many(keys, compute)


def _encode_images(images, spec, handle, cache):
    handle = handle or clip.get_encoder(spec)

    def compute(indices):
        out = []
        for chunk in _batched([images[i] for i in indices], spec.batch_size):
            out.append(handle.image_features([im.to_pil() for im in chunk]))
        return np.concatenate(out)

    if cache is None:
        return list(compute(range(len(images))))
    keys = [emb_cache.cache_key(spec.checkpoint_id, spec.variant,
                                image.to_png()) for image in images]
    return cache.get_or_compute_many(keys, compute)


def encode_text(record, spec, handle=None, cache=None):
    if spec.kind != constants.ENCODER_TEXT:
        raise exceptions.KindMismatch(encoder=spec.kind, window='text')
    return Embedding(_encode_texts([str(record)], spec, handle, cache)[0])


def encode_image(image, spec, handle=None, cache=None):
    if spec.kind != constants.ENCODER_IMAGE:
        raise exceptions.KindMismatch(encoder=spec.kind, window='image')
    return Embedding(_encode_images([image], spec, handle, cache)[0])


def encode_sequence(window_set, spec, handle=None, cache=None,
                    render_config=None):
    """One EmbeddingSequence per window.

    The identity encoder passes the window values through unchanged. The
    pretrained encoders embed every text record or every chart frame; all
    items of the set are encoded in batches before sequences are cut.
    """
    windows = list(window_set)
    kinds = {w.kind for w in windows} or {window_set.kind}
    if len(kinds) > 1:
        raise exceptions.ConfigError(
            reason=_('windows of mixed kinds %s') % ', '.join(sorted(kinds)))
    kind = kinds.pop()
    check_compatible(kind, spec)
    if not windows:
        return []

    if spec.kind == constants.ENCODER_IDENTITY:
        vectors = [np.asarray(w.values, dtype=np.float64) for w in windows]
    elif spec.kind == constants.ENCODER_TEXT:
        # Neighbouring windows share all but one record.
        unique = {}
        for w in windows:
            for record in w.texts:
                unique.setdefault(str(record), len(unique))
        flat = _encode_texts(list(unique), spec, handle, cache)
        vectors = [np.stack([flat[unique[str(r)]] for r in w.texts])
                   for w in windows]
    else:
        config = render_config or chart.RenderConfig()
        unique = {}
        frames = []
        for w in windows:
            for frame in w.frames:
                start = frame[0].timestamp
                if start not in unique:
                    unique[start] = len(frames)
                    frames.append(frame)
        images = [chart.render_chart(frame, config) for frame in frames]
        flat = _encode_images(images, spec, handle, cache)
        vectors = [np.stack([flat[unique[f[0].timestamp]] for f in w.frames])
                   for w in windows]

    sequences = []
    expected = win.sequence_length(kind)
    for window, values in zip(windows, vectors):
        if values.shape[0] != expected:
            raise exceptions.DimensionMismatch(got=values.shape[0],
                                               expected=expected)
        sequences.append(EmbeddingSequence(vectors=values,
                                           anchor=window.anchor_ts,
                                           label=window.label,
                                           kind=kind))
    return sequences


def stack(sequences):
    """(N, L, D) float32 array and (N,) label array."""
    if not sequences:
        return (np.zeros((0, 0, 0), dtype=np.float32),
                np.zeros((0,), dtype=np.int64))
    dims = {s.vectors.shape for s in sequences}
    if len(dims) > 1:
        raise exceptions.DimensionMismatch(got=sorted(dims)[-1],
                                           expected=sorted(dims)[0])
    data = np.stack([s.vectors for s in sequences]).astype(np.float32)
    labels = np.array([s.label for s in sequences], dtype=np.int64)
    return data, labels
