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

from oslo_config import cfg
from oslo_config import types
from oslo_log import log as logging

from chartcast import catalog
from chartcast.common import constants
from chartcast.i18n import _

LOG = logging.getLogger(__name__)


default_opts = [
    cfg.IntOpt('seed',
               default=7,
               min=0,
               help=_('Master seed. Synthetic data, trial sampling, '
                      'per-trial training seeds and projections are all '
                      'derived from it.')),
    cfg.StrOpt('output_dir',
               default='runs',
               help=_('Directory under which run directories are '
                      'created.')),
]

data_opts = [
    cfg.StrOpt('dataset_path',
               help=_('CSV file with header timestamp,open,high,low,close. '
                      'When unset a synthetic series is generated.')),
    cfg.IntOpt('synthetic_bars',
               default=5000,
               min=1,
               help=_('Number of hourly bars of the synthetic series.')),
    cfg.FloatOpt('synthetic_volatility',
                 default=15.0,
                 min=0.0,
                 help=_('Standard deviation in pip of the close-to-close '
                        'increments of the synthetic random walk.')),
    cfg.FloatOpt('train_fraction',
                 default=0.6,
                 min=0.0,
                 max=1.0,
                 help=_('Chronological fraction of bars used for '
                        'training.')),
    cfg.FloatOpt('validation_fraction',
                 default=0.2,
                 min=0.0,
                 max=1.0,
                 help=_('Fraction of bars used for validation.')),
    cfg.FloatOpt('test_fraction',
                 default=0.2,
                 min=0.0,
                 max=1.0,
                 help=_('Fraction of bars used for testing.')),
    cfg.ListOpt('schemes',
                default=list(constants.LABEL_SCHEMES),
                item_type=types.String(choices=constants.LABEL_SCHEMES),
                help=_('Label schemes to evaluate.')),
]

render_opts = [
    cfg.IntOpt('width', default=224, min=32,
               help=_('Chart image width in pixels.')),
    cfg.IntOpt('height', default=224, min=32,
               help=_('Chart image height in pixels.')),
    cfg.IntOpt('window_hours', default=20, min=2,
               help=_('Number of hourly bars drawn in one chart.')),
    cfg.FloatOpt('grid_spacing', default=20.0, min=0.1,
                 help=_('Distance in pip between horizontal gridlines.')),
    cfg.FloatOpt('padding_fraction', default=0.05, min=0.0, max=1.0,
                 help=_('Value-axis padding on each side, as a fraction of '
                        'the window price range.')),
    cfg.FloatOpt('min_padding', default=10.0, min=0.1,
                 help=_('Value-axis padding in pip used when the window '
                        'price range is zero.')),
    cfg.IntOpt('margin', default=4, min=0,
               help=_('Horizontal and vertical margin in pixels around the '
                      'plotted lines.')),
]

encoder_opts = [
    cfg.StrOpt('checkpoint',
               default=constants.DEFAULT_CHECKPOINT,
               help=_('Pretrained vision-language checkpoint identifier.')),
    cfg.StrOpt('embedding_output',
               default=constants.EMBEDDING_PROJECTED,
               choices=[constants.EMBEDDING_POOLED,
                        constants.EMBEDDING_PROJECTED],
               help=_('Use the pooled encoder output or its projection '
                      'into the joint embedding space.')),
    cfg.StrOpt('cache_dir',
               help=_('Embedding cache directory. Defaults to a cache '
                      'directory inside the output directory.')),
    cfg.StrOpt('device', default='cpu',
               help=_('Torch device used for encoder inference.')),
    cfg.IntOpt('max_text_tokens', default=77, min=8,
               help=_('Tokenizer context length; longer records are '
                      'truncated at the tail.')),
    cfg.IntOpt('load_retry_max_interval', default=30, min=1,
               help=_('Max interval in seconds between retries when '
                      'loading a checkpoint.')),
    cfg.IntOpt('batch_size', default=32, min=1,
               help=_('Number of records or images encoded per forward '
                      'pass.')),
]

train_opts = [
    cfg.IntOpt('batch_size', default=128, min=1,
               help=_('Training batch size.')),
    cfg.FloatOpt('learning_rate', default=0.001, min=1e-12,
                 help=_('Base learning rate.')),
    cfg.FloatOpt('dropout', default=0.4, min=0.0, max=0.99,
                 help=_('Dropout ratio of the recurrent stack and the '
                        'classifier head.')),
    cfg.FloatOpt('short_weight', default=-0.00005,
                 help=_('Short-class loss weighting parameter w; the short '
                        'class weight is 1 + w * n_train.')),
    cfg.IntOpt('max_epochs', default=100, min=1,
               help=_('Maximum number of training epochs.')),
    cfg.IntOpt('patience', default=15, min=1,
               help=_('Epochs without validation F1 improvement before '
                      'training stops.')),
    cfg.IntOpt('hidden_dim', default=64, min=1,
               help=_('LSTM hidden size.')),
    cfg.IntOpt('mlp_hidden', default=32, min=1,
               help=_('Hidden size of the classifier MLP.')),
    cfg.IntOpt('stacked_layers', default=2, min=2,
               help=_('Number of LSTM layers of the stacked model.')),
    cfg.FloatOpt('dain_shift_lr', default=1.0, min=1e-12,
                 help=_('Learning-rate multiplier of the DAIN shift '
                        'stage.')),
    cfg.FloatOpt('dain_scale_lr', default=0.1, min=1e-12,
                 help=_('Learning-rate multiplier of the DAIN scale '
                        'stage.')),
    cfg.FloatOpt('dain_gate_lr', default=0.01, min=1e-12,
                 help=_('Learning-rate multiplier of the DAIN gating '
                        'stage.')),
]

search_opts = [
    cfg.ListOpt('models',
                default=[catalog.LSTM],
                item_type=types.String(choices=catalog.MODEL_KINDS),
                help=_('Model kinds searched by the pipeline.')),
    cfg.IntOpt('trials', default=30, min=1,
               help=_('Number of configurations sampled without '
                      'replacement per model kind and scheme.')),
    cfg.IntOpt('top_k', default=3, min=1,
               help=_('Number of best validation trials averaged on the '
                      'test set.')),
    cfg.IntOpt('workers', default=1, min=1,
               help=_('Number of worker processes running trials.')),
    cfg.ListOpt('batch_sizes',
                default=constants.SEARCH_BATCH_SIZES,
                item_type=types.Integer(min=1),
                help=_('Batch sizes of the search grid.')),
    cfg.ListOpt('learning_rates',
                default=constants.SEARCH_LEARNING_RATES,
                item_type=types.Float(min=1e-12),
                help=_('Learning rates of the search grid.')),
    cfg.ListOpt('dropouts',
                default=constants.SEARCH_DROPOUTS,
                item_type=types.Float(min=0.0, max=0.99),
                help=_('Dropout ratios of the search grid.')),
    cfg.ListOpt('short_weights',
                default=constants.SEARCH_SHORT_WEIGHTS,
                item_type=types.Float(),
                help=_('Short-class weighting parameters of the search '
                       'grid.')),
]

analysis_opts = [
    cfg.FloatOpt('perplexity', default=30.0, min=1.0,
                 help=_('t-SNE perplexity.')),
    cfg.IntOpt('number_range', default=1000, min=1,
               help=_('Largest number encoded by the number-embedding '
                      'study.')),
    cfg.IntOpt('bucket_size', default=100, min=1,
               help=_('Bucket width used to summarise number-embedding '
                      'clusters.')),
    cfg.FloatOpt('overlay_alpha', default=0.5, min=0.0, max=1.0,
                 help=_('Opacity of the relevance heatmap overlay.')),
]

OPT_GROUPS = (
    (None, default_opts),
    ('data', data_opts),
    ('render', render_opts),
    ('encoder', encoder_opts),
    ('train', train_opts),
    ('search', search_opts),
    ('analysis', analysis_opts),
)


def register_opts(conf=None):
    conf = conf or cfg.CONF
    for group, opts in OPT_GROUPS:
        conf.register_opts(opts, group=group)


def list_opts():
    return [(group or 'DEFAULT', opts) for group, opts in OPT_GROUPS]


def find_opt(group, name):
    """Return the registered option object for ``group.name`` or None."""
    for opt_group, opts in OPT_GROUPS:
        if (opt_group or 'DEFAULT') != group:
            continue
        for opt in opts:
            if opt.dest == name:
                return opt
    return None


def get_load_retry_max_interval():
    return cfg.CONF.encoder.load_retry_max_interval
