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

import hashlib
import os
import random
import tempfile

import numpy as np
from oslo_log import log as logging
from oslo_serialization import jsonutils
from oslo_utils import excutils
import tenacity
import torch

from chartcast.common import config

LOG = logging.getLogger(__name__)

# Attempts made when loading a checkpoint before giving up.
RETRY_ATTEMPTS = 5


def sha256_hex(*parts):
    digest = hashlib.sha256()
    for part in parts:
        if isinstance(part, str):
            part = part.encode('utf-8')
        digest.update(len(part).to_bytes(8, 'little'))
        digest.update(part)
    return digest.hexdigest()


def config_hash(data):
    """Stable hash of a JSON-serializable mapping."""
    return sha256_hex(jsonutils.dumps(data, sort_keys=True))


def derive_seed(master, *path):
    """Child seed of ``master`` for the position ``path``.

    ``derive_seed(7, 3)`` is the seed of trial 3 under master seed 7. The
    result fits a 32 bit unsigned integer so it can seed every generator
    used in the project.
    """
    seq = np.random.SeedSequence([int(master), *[int(p) for p in path]])
    return int(seq.generate_state(1, dtype=np.uint32)[0])


def seed_everything(seed):
    """Seed the torch generator and return a numpy Generator."""
    torch.manual_seed(seed)
    random.seed(seed)
    return np.random.default_rng(seed)


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def atomic_write(path, data):
    """Write ``data`` (bytes or str) so readers never see partial files."""
    if isinstance(data, str):
        data = data.encode('utf-8')
    directory = os.path.dirname(os.path.abspath(path))
    ensure_dir(directory)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix='.tmp-')
    try:
        with os.fdopen(fd, 'wb') as handle:
            handle.write(data)
        os.replace(tmp, path)
    except Exception:
        with excutils.save_and_reraise_exception():
            if os.path.exists(tmp):
                os.unlink(tmp)


def write_json(path, data):
    atomic_write(path, jsonutils.dumps(data, sort_keys=True, indent=2))


def read_json(path):
    with open(path, 'rb') as handle:
        return jsonutils.loads(handle.read())


def write_jsonl(path, records):
    lines = [jsonutils.dumps(record, sort_keys=True) for record in records]
    atomic_write(path, ''.join(line + '\n' for line in lines))


def append_jsonl(path, record):
    ensure_dir(os.path.dirname(os.path.abspath(path)))
    with open(path, 'a', encoding='utf-8') as handle:
        handle.write(jsonutils.dumps(record, sort_keys=True) + '\n')


def read_jsonl(path):
    records = []
    with open(path, encoding='utf-8') as handle:
        for line in handle:
            line = line.strip()
            if line:
                records.append(jsonutils.loads(line))
    return records


def retry(max_=None, attempts=RETRY_ATTEMPTS):
    def inner(func):
        def wrapper(*args, **kwargs):
            local_max = max_ or config.get_load_retry_max_interval()
            return tenacity.retry(
                wait=tenacity.wait_exponential(max=local_max),
                stop=tenacity.stop_after_attempt(attempts),
                reraise=True)(func)(*args, **kwargs)
        return wrapper
    return inner
