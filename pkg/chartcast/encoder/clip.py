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

"""Frozen pretrained vision-language encoders."""

import hashlib
import threading

import numpy as np
from oslo_log import log as logging
import torch
import transformers

from chartcast.common import constants
from chartcast.common import exceptions
from chartcast.common import utils

LOG = logging.getLogger(__name__)

ATTN_IMPLEMENTATION = 'eager'


@utils.retry()
def _from_pretrained(loader, checkpoint_id, **kwargs):
    return loader.from_pretrained(checkpoint_id, **kwargs)


def parameter_digest(model):
    """sha256 over every parameter and buffer of ``model``."""
    digest = hashlib.sha256()
    for name, tensor in model.state_dict().items():
        digest.update(name.encode('utf-8'))
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


class ClipEncoder():
    """Lazily loaded CLIP model with its tokenizer and image processor.

    Weights are put in inference mode and never receive gradients. With
    ``random_init`` the architecture of the checkpoint is built with seeded
    random weights instead of the pretrained ones.
    """

    def __init__(self, checkpoint_id=constants.DEFAULT_CHECKPOINT,
                 random_init=False, seed=0, device='cpu',
                 embedding_output=constants.EMBEDDING_PROJECTED,
                 max_text_tokens=77, model=None, tokenizer=None,
                 image_processor=None):
        self.checkpoint_id = checkpoint_id
        self.random_init = random_init
        self.seed = seed
        self.device = device
        self.embedding_output = embedding_output
        self.max_text_tokens = max_text_tokens
        self._model = model
        self._tokenizer = tokenizer
        self._image_processor = image_processor
        self._lock = threading.Lock()
        if model is not None:
            self._freeze(model)

    def _freeze(self, model):
        model.to(self.device)
        model.eval()
        model.requires_grad_(False)

    def _load_model(self):
        if not self.random_init:
            return _from_pretrained(transformers.CLIPModel,
                                    self.checkpoint_id,
                                    attn_implementation=ATTN_IMPLEMENTATION)
        config = _from_pretrained(transformers.CLIPConfig,
                                  self.checkpoint_id)
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(self.seed)
            return transformers.AutoModel.from_config(
                config, attn_implementation=ATTN_IMPLEMENTATION)

    @property
    def model(self):
        if self._model is None:
            with self._lock:
                if self._model is None:
                    try:
                        model = self._load_model()
                    except Exception as e:
                        LOG.exception('Error loading encoder checkpoint %s',
                                      self.checkpoint_id)
                        raise exceptions.CheckpointLoadError(
                            checkpoint=self.checkpoint_id, reason=e)
                    self._freeze(model)
                    self._model = model
                    LOG.info('Loaded encoder %(ckpt)s (random init: '
                             '%(random)s)', {'ckpt': self.checkpoint_id,
                                             'random': self.random_init})
        return self._model

    @property
    def tokenizer(self):
        if self._tokenizer is None:
            try:
                self._tokenizer = _from_pretrained(
                    transformers.CLIPTokenizer, self.checkpoint_id)
            except Exception as e:
                raise exceptions.CheckpointLoadError(
                    checkpoint=self.checkpoint_id, reason=e)
        return self._tokenizer

    @property
    def image_processor(self):
        if self._image_processor is None:
            try:
                self._image_processor = _from_pretrained(
                    transformers.CLIPImageProcessor, self.checkpoint_id)
            except Exception as e:
                raise exceptions.CheckpointLoadError(
                    checkpoint=self.checkpoint_id, reason=e)
        return self._image_processor

    @property
    def patch_grid(self):
        vision = self.model.config.vision_config
        side = vision.image_size // vision.patch_size
        return side, side

    def parameter_digest(self):
        return parameter_digest(self.model)

    def preprocessing(self):
        """Image preprocessing recorded with run metadata."""
        processor = self.image_processor
        return {'image_mean': list(getattr(processor, 'image_mean', [])),
                'image_std': list(getattr(processor, 'image_std', [])),
                'resample': str(getattr(processor, 'resample', '')),
                'size': dict(getattr(processor, 'size', {}) or {})}

    def _tokenize(self, texts):
        lengths = [len(ids) for ids in self.tokenizer(texts)['input_ids']]
        over = [n for n in lengths if n > self.max_text_tokens]
        if over:
            LOG.warning('Truncated %(count)d text records to %(max)d '
                        'tokens (longest had %(longest)d)',
                        {'count': len(over), 'max': self.max_text_tokens,
                         'longest': max(over)})
        return self.tokenizer(texts, padding=True, truncation=True,
                              max_length=self.max_text_tokens,
                              return_tensors='pt')

    def pixel_values(self, images):
        inputs = self.image_processor(images=list(images),
                                      return_tensors='pt')
        return inputs['pixel_values'].to(self.device)

    def text_features(self, texts):
        """(N, D) float32 array for a list of strings."""
        inputs = {key: value.to(self.device)
                  for key, value in self._tokenize(list(texts)).items()
                  if key in ('input_ids', 'attention_mask')}
        with torch.no_grad():
            pooled = self.model.text_model(**inputs).pooler_output
            if self.embedding_output == constants.EMBEDDING_PROJECTED:
                pooled = self.model.text_projection(pooled)
        return pooled.cpu().numpy().astype(np.float32)

    def image_features(self, images):
        """(N, D) float32 array for a list of PIL images."""
        pixels = self.pixel_values(images)
        with torch.no_grad():
            pooled = self.model.vision_model(
                pixel_values=pixels).pooler_output
            if self.embedding_output == constants.EMBEDDING_PROJECTED:
                pooled = self.model.visual_projection(pooled)
        return pooled.cpu().numpy().astype(np.float32)


_ENCODERS = {}
_ENCODERS_LOCK = threading.Lock()


def get_encoder(spec):
    """Shared encoder handle for an EncoderSpec."""
    with _ENCODERS_LOCK:
        key = spec.handle_key
        if key not in _ENCODERS:
            _ENCODERS[key] = ClipEncoder(
                checkpoint_id=spec.checkpoint_id,
                random_init=spec.random_init,
                seed=spec.seed,
                device=spec.device,
                embedding_output=spec.embedding_output,
                max_text_tokens=spec.max_text_tokens)
        return _ENCODERS[key]


def register_encoder(spec, encoder):
    with _ENCODERS_LOCK:
        _ENCODERS[spec.handle_key] = encoder


def reset_encoders():
    with _ENCODERS_LOCK:
        _ENCODERS.clear()
