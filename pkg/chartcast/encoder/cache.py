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

"""Content-addressed embedding cache.

Each vector is stored as ``<key>.bin`` holding little-endian float32 values.
``index.jsonl`` records the key, dimension and sha256 of every entry; a
file whose size or digest disagrees with its index record is treated as
corrupt and recomputed.
"""

import hashlib
import os
import threading

import numpy as np
from oslo_log import log as logging

from chartcast.common import constants
from chartcast.common import utils

LOG = logging.getLogger(__name__)

_DTYPE = np.dtype('<f4')


def cache_key(checkpoint_id, variant, payload):
    """Content hash of (checkpoint, encoder variant, representation)."""
    return utils.sha256_hex(checkpoint_id, variant, payload)


class EmbeddingCache():

    def __init__(self, directory):
        self.directory = utils.ensure_dir(directory)
        self.index_path = os.path.join(directory, constants.CACHE_INDEX)
        self.hits = 0
        self.misses = 0
        self._write_lock = threading.Lock()
        self._index = {}
        if os.path.exists(self.index_path):
            for record in utils.read_jsonl(self.index_path):
                self._index[record['key']] = record

    def _path(self, key):
        return os.path.join(self.directory, '%s.bin' % key)

    def _read(self, key):
        record = self._index.get(key)
        path = self._path(key)
        if record is None or not os.path.exists(path):
            return None
        with open(path, 'rb') as handle:
            data = handle.read()
        if (len(data) != record['dim'] * _DTYPE.itemsize or
                hashlib.sha256(data).hexdigest() != record['digest']):
            LOG.warning('Embedding cache entry %s is corrupt, recomputing',
                        key)
            return None
        return np.frombuffer(data, dtype=_DTYPE).astype(np.float32)

    def put(self, key, vector):
        data = np.ascontiguousarray(vector, dtype=_DTYPE).tobytes()
        record = {'key': key, 'dim': int(np.size(vector)),
                  'digest': hashlib.sha256(data).hexdigest()}
        with self._write_lock:
            utils.atomic_write(self._path(key), data)
            if self._index.get(key) != record:
                self._index[key] = record
                utils.append_jsonl(self.index_path, record)

    def get(self, key):
        return self._read(key)

    def get_or_compute(self, key, compute):
        vector = self._read(key)
        if vector is not None:
            self.hits += 1
            return vector
        self.misses += 1
        vector = np.asarray(compute(), dtype=np.float32).reshape(-1)
        self.put(key, vector)
        return vector

    def get_or_compute_many(self, keys, compute_many):
        """Vectors for ``keys``; ``compute_many`` gets the missing indices."""
        vectors = [self._read(key) for key in keys]
        missing = [i for i, vector in enumerate(vectors) if vector is None]
        self.hits += len(keys) - len(missing)
        self.misses += len(missing)
        if missing:
            computed = np.asarray(compute_many(missing), dtype=np.float32)
            for i, vector in zip(missing, computed):
                self.put(keys[i], vector)
                vectors[i] = np.asarray(vector, dtype=np.float32)
        return vectors

    def stats(self):
        return {'hits': self.hits, 'misses': self.misses,
                'entries': len(self._index)}
