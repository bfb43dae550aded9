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
from unittest import mock

import torch

from chartcast.common import config
from chartcast.common import utils
from chartcast.tests.unit import base


class TestRetryDecorator(base.ChartcastTestCase):
    DEFAULT_RETRY_VALUE = 10

    def setUp(self):
        super().setUp()
        mock.patch.object(
            config, "get_load_retry_max_interval",
            return_value=self.DEFAULT_RETRY_VALUE).start()

    def test_default_retry_value(self):
        with mock.patch('tenacity.wait_exponential') as m_wait:
            @utils.retry()
            def decorated_method():
                pass

            decorated_method()
        m_wait.assert_called_with(max=self.DEFAULT_RETRY_VALUE)

    def test_custom_retry_value(self):
        custom_value = 3
        with mock.patch('tenacity.wait_exponential') as m_wait:
            @utils.retry(max_=custom_value)
            def decorated_method():
                pass

            decorated_method()
        m_wait.assert_called_with(max=custom_value)

    def test_positive_result(self):
        number_of_exceptions = 3
        method = mock.Mock(
            side_effect=[OSError() for i in range(number_of_exceptions)] +
            ['loaded'])

        @utils.retry(max_=0.001)
        def decorated_method():
            return method()

        self.assertEqual('loaded', decorated_method())
        # number of exceptions + one successful call
        self.assertEqual(number_of_exceptions + 1, method.call_count)

    def test_gives_up(self):
        method = mock.Mock(side_effect=OSError('offline'))

        @utils.retry(max_=0.001, attempts=2)
        def decorated_method():
            return method()

        self.assertRaises(OSError, decorated_method)
        self.assertEqual(2, method.call_count)


class TestHashing(base.ChartcastTestCase):

    def test_sha256_parts_are_delimited(self):
        self.assertNotEqual(utils.sha256_hex('ab', 'c'),
                            utils.sha256_hex('a', 'bc'))

    def test_sha256_bytes_and_str_agree(self):
        self.assertEqual(utils.sha256_hex(b'abc'), utils.sha256_hex('abc'))

    def test_config_hash_ignores_key_order(self):
        self.assertEqual(utils.config_hash({'a': 1, 'b': [1, 2]}),
                         utils.config_hash({'b': [1, 2], 'a': 1}))
        self.assertNotEqual(utils.config_hash({'a': 1}),
                            utils.config_hash({'a': 2}))


class TestSeeds(base.ChartcastTestCase):

    def test_derive_seed_is_stable(self):
        self.assertEqual(utils.derive_seed(7, 3), utils.derive_seed(7, 3))

    def test_derive_seed_separates_paths(self):
        seeds = {utils.derive_seed(7, i) for i in range(50)}
        self.assertEqual(50, len(seeds))
        self.assertNotEqual(utils.derive_seed(7, 1), utils.derive_seed(8, 1))

    def test_derive_seed_fits_uint32(self):
        seed = utils.derive_seed(123456789, 2, 5)
        self.assertTrue(0 <= seed < 2 ** 32)

    def test_seed_everything(self):
        rng = utils.seed_everything(11)
        first = torch.rand(3)
        value = rng.random()
        rng = utils.seed_everything(11)
        self.assertTrue(torch.equal(first, torch.rand(3)))
        self.assertEqual(value, rng.random())


class TestFiles(base.ChartcastTestCase):

    def test_atomic_write_replaces(self):
        path = os.path.join(self.tempdir, 'sub', 'out.txt')
        utils.atomic_write(path, 'first')
        utils.atomic_write(path, b'second')
        with open(path) as handle:
            self.assertEqual('second', handle.read())
        self.assertEqual(['out.txt'],
                         os.listdir(os.path.dirname(path)))

    def test_atomic_write_cleans_up_on_failure(self):
        path = os.path.join(self.tempdir, 'out.txt')
        with mock.patch.object(os, 'replace',
                               side_effect=OSError('disk full')):
            self.assertRaises(OSError, utils.atomic_write, path, 'data')
        self.assertEqual([], os.listdir(self.tempdir))

    def test_json_and_jsonl(self):
        path = os.path.join(self.tempdir, 'data.json')
        utils.write_json(path, {'b': 1, 'a': [1.5, None]})
        self.assertEqual({'a': [1.5, None], 'b': 1}, utils.read_json(path))

        lines = os.path.join(self.tempdir, 'data.jsonl')
        utils.write_jsonl(lines, [{'x': 1}])
        utils.append_jsonl(lines, {'x': 2})
        self.assertEqual([{'x': 1}, {'x': 2}], utils.read_jsonl(lines))
