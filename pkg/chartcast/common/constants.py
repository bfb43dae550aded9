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

# Price columns as they appear in input files.
CSV_COLUMNS = ('timestamp', 'open', 'high', 'low', 'close')
TIMESTAMP_FORMAT = '%Y-%m-%d %H:%M:%S'

# Numeric feature order used by every numeric window and normalizer.
FEATURE_ORDER = ('close', 'open', 'high', 'low')

# Label schemes
SCHEME_STANDARD = 'standard'
SCHEME_DELAYED = 'delayed'
LABEL_SCHEMES = (SCHEME_STANDARD, SCHEME_DELAYED)
TRADE_HORIZON_HOURS = 6

LABEL_SHORT = 0
LABEL_LONG = 1

# Window kinds
WINDOW_NUMERIC24 = 'numeric24'
WINDOW_NUMERIC48 = 'numeric48'
WINDOW_IMAGE5X20 = 'image5x20'
WINDOW_TEXT24 = 'text24'
IMAGE_SEQUENCE_LENGTH = 5

# Encoder kinds
ENCODER_TEXT = 'text'
ENCODER_IMAGE = 'image'
ENCODER_IDENTITY = 'numeric'
ENCODER_KINDS = (ENCODER_TEXT, ENCODER_IMAGE, ENCODER_IDENTITY)

EMBEDDING_POOLED = 'pooled'
EMBEDDING_PROJECTED = 'projected'
DEFAULT_CHECKPOINT = 'openai/clip-vit-base-patch32'

# Strategies
STRATEGY_RANDOM = 'random'
STRATEGY_LONG = 'long'
STRATEGY_SHORT = 'short'
STRATEGIES = (STRATEGY_RANDOM, STRATEGY_LONG, STRATEGY_SHORT)
STRATEGY_DISPLAY_NAMES = {
    STRATEGY_RANDOM: 'Random',
    STRATEGY_LONG: 'Always Long',
    STRATEGY_SHORT: 'Always Short',
}

# Hyperparameter search grid
SEARCH_BATCH_SIZES = [16, 32, 64, 128, 256]
SEARCH_LEARNING_RATES = [0.00005, 0.0001, 0.0005, 0.001]
SEARCH_DROPOUTS = [0.0, 0.2, 0.4]
SEARCH_SHORT_WEIGHTS = [-0.00015, -0.00005, 0.0]

# Short-class loss weight mapping, recorded verbatim in checkpoints.
SHORT_WEIGHT_FORMULA = 'weight_short = 1 + w * n_train'

STD_KIND = 'population'

# Run directory layout
STAGE_MARKER = '_SUCCESS.json'
AUDIT_LOG = 'audit.jsonl'
CACHE_INDEX = 'index.jsonl'
CHECKPOINT_FORMAT_VERSION = 1

# Prepended to exception log messages
EXCEPTION_MSG = "Exception occurred during %s"
