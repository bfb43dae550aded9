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
#

import os

import numpy as np

from chartcast.common import constants
from chartcast.encoder import cache
from chartcast.tests.unit import base


class TestEmbeddingCache(base.ChartcastTestCase):

    def setUp(self):
        super().setUp()
        self.directory = os.path.join(self.tempdir, 'cache')
        self.cache = cache.EmbeddingCache(self.directory)

    def test_cache_key(self):
        key = cache.cache_key('ckpt', 'text/projected/pretrained', b'abc')
        self.assertEqual(64, len(key))
        self.assertNotEqual(
            key, cache.cache_key('ckpt', 'text/pooled/pretrained', b'abc'))
        self.assertNotEqual(
            key, cache.cache_key('other', 'text/projected/pretrained',
                                 b'abc'))

    def test_miss_then_hit(self):
        calls = []

        def compute():
            calls.append(1)
            return [1.0, 2.0, 3.0]

        first = self.cache.get_or_compute('k1', compute)
        second = self.cache.get_or_compute('k1', compute)
        np.testing.assert_array_equal([1.0, 2.0, 3.0], first)
        np.testing.assert_array_equal(first, second)
        self.assertEqual(np.float32, second.dtype)
        self.assertEqual(1, len(calls))
        self.assertEqual({'hits': 1, 'misses': 1, 'entries': 1},
                         self.cache.stats())

    def test_survives_reopen(self):
        self.cache.put('k1', np.array([0.5, -0.25], dtype=np.float32))
        reopened = cache.EmbeddingCache(self.directory)
        np.testing.assert_array_equal([0.5, -0.25], reopened.get('k1'))
        self.assertTrue(os.path.exists(
            os.path.join(self.directory, constants.CACHE_INDEX)))

    def test_corrupt_entry_is_recomputed(self):
        self.cache.put('k1', np.array([1.0, 2.0], dtype=np.float32))
        with open(os.path.join(self.directory, 'k1.bin'), 'wb') as handle:
            handle.write(b'\x00' * 8)
        self.assertIsNone(self.cache.get('k1'))
        vector = self.cache.get_or_compute('k1', lambda: [1.0, 2.0])
        np.testing.assert_array_equal([1.0, 2.0], vector)
        self.assertEqual(1, self.cache.misses)
        np.testing.assert_array_equal([1.0, 2.0], self.cache.get('k1'))

    def test_truncated_entry_is_recomputed(self):
        self.cache.put('k1', np.array([1.0, 2.0], dtype=np.float32))
        with open(os.path.join(self.directory, 'k1.bin'), 'wb') as handle:
            handle.write(b'\x00' * 3)
        self.assertIsNone(self.cache.get('k1'))

    def test_many_computes_only_missing(self):
        self.cache.put('b', np.array([2.0], dtype=np.float32))
        seen = []

        def compute_many(indices):
            seen.append(list(indices))
            return [[10.0 * i] for i in indices]

        vectors = self.cache.get_or_compute_many(['a', 'b', 'c'],
                                                 compute_many)
        self.assertEqual([[0, 2]], seen)
        np.testing.assert_array_equal([[0.0], [2.0], [20.0]],
                                      np.stack(vectors))
        self.assertEqual({'hits': 1, 'misses': 2, 'entries': 3},
                         self.cache.stats())
