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

import copy
import dataclasses
import io
import math
import os

import numpy as np
from oslo_config import cfg
from oslo_log import log as logging
import torch

from chartcast.common import constants
from chartcast.common import exceptions
from chartcast.common import utils
from chartcast.encoder import base as enc_base
from chartcast import evaluation
from chartcast.forecaster import dain as dain_mod
from chartcast.forecaster import loss as loss_mod
from chartcast.forecaster import model as model_mod
from chartcast.i18n import _

LOG = logging.getLogger(__name__)

CHECKPOINT_FILE = 'checkpoint.bin'
SIDECAR_FILE = 'checkpoint.json'


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    learning_rate: float = 0.001
    dropout: float = 0.4
    short_weight: float = -0.00005
    max_epochs: int = 100
    patience: int = 15
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise exceptions.ConfigRangeError(value=self.batch_size,
                                              key='batch_size', bounds='>= 1')
        if not self.learning_rate > 0:
            raise exceptions.ConfigRangeError(value=self.learning_rate,
                                              key='learning_rate',
                                              bounds='> 0')

    @classmethod
    def from_conf(cls, seed, conf=None, **overrides):
        group = (conf or cfg.CONF).train
        values = {'batch_size': group.batch_size,
                  'learning_rate': group.learning_rate,
                  'dropout': group.dropout,
                  'short_weight': group.short_weight,
                  'max_epochs': group.max_epochs,
                  'patience': group.patience,
                  'seed': seed}
        values.update(overrides)
        return cls(**values)


@dataclasses.dataclass
class TrainedModel:
    state: dict
    head_config: model_mod.LstmHeadConfig
    train_config: TrainConfig
    dain_config: dain_mod.DainConfig = None
    validation_f1: float = 0.0
    best_epoch: int = 0
    n_train: int = 0
    history: list = dataclasses.field(default_factory=list)

    def build(self):
        module = model_mod.LstmHead(self.head_config, self.dain_config)
        module.load_state_dict(self.state)
        module.eval()
        return module

    def predict_proba(self, batch):
        return model_mod.forward(self.build(), batch)

    def metadata(self):
        return {
            'format_version': constants.CHECKPOINT_FORMAT_VERSION,
            'head_config': dataclasses.asdict(self.head_config),
            'dain_config': (dataclasses.asdict(self.dain_config)
                            if self.dain_config else None),
            'train_config': dataclasses.asdict(self.train_config),
            'seed': self.train_config.seed,
            'short_weight_formula': constants.SHORT_WEIGHT_FORMULA,
            'short_class_weight': loss_mod.short_weight(
                self.train_config.short_weight, self.n_train),
            'n_train': self.n_train,
            'validation_f1': self.validation_f1,
            'best_epoch': self.best_epoch,
            'history': self.history,
        }


def _arrays(data):
    if isinstance(data, tuple) and len(data) == 2:
        features, labels = data
        return (np.asarray(features, dtype=np.float32),
                np.asarray(labels, dtype=np.int64))
    return enc_base.stack(list(data))


def train(head_config, train_data, validation_data, config,
          dain_config=None):
    """Fit an LstmHead and keep the epoch with the best validation F1.

    ``train_data`` and ``validation_data`` are lists of EmbeddingSequence or
    ``(features, labels)`` array pairs. The head is built with the dropout
    of ``config``.
    """
    head_config = dataclasses.replace(head_config, dropout=config.dropout)
    x_train, y_train = _arrays(train_data)
    x_val, y_val = _arrays(validation_data)
    if len(x_train) == 0 or len(x_val) == 0:
        raise exceptions.NoSamples()
    if x_train.shape[-1] != head_config.input_dim:
        raise exceptions.DimensionMismatch(got=x_train.shape[-1],
                                           expected=head_config.input_dim)
    n_train = len(x_train)
    loss_mod.short_weight(config.short_weight, n_train)
    rng = np.random.default_rng(config.seed)
    inputs = torch.as_tensor(x_train)
    targets = torch.as_tensor(y_train)

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        module = model_mod.LstmHead(head_config, dain_config)
        optimizer = torch.optim.Adam(
            module.param_groups(config.learning_rate))
        history = []
        best_f1 = -1.0
        best_state = None
        best_epoch = 0
        stale = 0
        for epoch in range(config.max_epochs):
            module.train()
            order = rng.permutation(n_train)
            losses = []
            for batch, start in enumerate(range(0, n_train,
                                                config.batch_size)):
                idx = torch.as_tensor(order[start:start + config.batch_size])
                logits = module(inputs[idx])
                loss = loss_mod.weighted_bce_logits(
                    logits, targets[idx], config.short_weight, n_train)
                if not math.isfinite(float(loss)):
                    raise exceptions.TrainingDiverged(epoch=epoch,
                                                      batch=batch,
                                                      loss=float(loss))
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                losses.append(float(loss))

            probs = model_mod.forward(module, x_val)
            counts = evaluation.confusion_from_arrays(
                probs.argmax(axis=1), y_val)
            val_f1 = evaluation.f1_score(counts)
            record = {'epoch': epoch,
                      'loss': float(np.mean(losses)),
                      'validation_f1': val_f1,
                      'validation_balanced_acc':
                          evaluation.balanced_accuracy(counts)}
            if module.dain is not None:
                record['dain_clamps'] = module.dain.clamp_count
            history.append(record)
            LOG.debug('Epoch %(epoch)d loss %(loss).5f validation F1 '
                      '%(validation_f1).4f', record)

            if val_f1 > best_f1:
                best_f1 = val_f1
                best_epoch = epoch
                best_state = copy.deepcopy(module.state_dict())
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    break

    LOG.info('Trained %(layers)d-layer model on %(n)d sequences: best '
             'validation F1 %(f1).4f at epoch %(epoch)d',
             {'layers': head_config.num_layers, 'n': n_train, 'f1': best_f1,
              'epoch': best_epoch})
    return TrainedModel(state=best_state, head_config=head_config,
                        train_config=config, dain_config=dain_config,
                        validation_f1=best_f1, best_epoch=best_epoch,
                        n_train=n_train, history=history)


def save_checkpoint(directory, trained, **provenance):
    """Write the weights blob and its JSON sidecar into ``directory``."""
    buf = io.BytesIO()
    torch.save(trained.state, buf)
    utils.atomic_write(os.path.join(directory, CHECKPOINT_FILE),
                       buf.getvalue())
    sidecar = trained.metadata()
    sidecar.update(provenance)
    utils.write_json(os.path.join(directory, SIDECAR_FILE), sidecar)
    return os.path.join(directory, CHECKPOINT_FILE)


def load_checkpoint(directory):
    sidecar = utils.read_json(os.path.join(directory, SIDECAR_FILE))
    if sidecar.get('format_version') != constants.CHECKPOINT_FORMAT_VERSION:
        raise exceptions.TrainingError(
            reason=_('unsupported checkpoint format %s') %
            sidecar.get('format_version'))
    with open(os.path.join(directory, CHECKPOINT_FILE), 'rb') as handle:
        state = torch.load(io.BytesIO(handle.read()), weights_only=True)
    dain_config = sidecar.get('dain_config')
    return TrainedModel(
        state=state,
        head_config=model_mod.LstmHeadConfig(**sidecar['head_config']),
        train_config=TrainConfig(**sidecar['train_config']),
        dain_config=dain_mod.DainConfig(**dain_config) if dain_config
        else None,
        validation_f1=sidecar['validation_f1'],
        best_epoch=sidecar.get('best_epoch', 0),
        n_train=sidecar.get('n_train', 0),
        history=sidecar.get('history', []))
