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

import fixtures
from oslo_config import cfg
from oslo_config import fixture as config_fixture
from oslotest import base

from chartcast.common import config
from chartcast.encoder import clip


class ChartcastTestCase(base.BaseTestCase):

    def setUp(self):
        super().setUp()
        config.register_opts(cfg.CONF)
        self.cfg = self.useFixture(config_fixture.Config(cfg.CONF))
        self.tempdir = self.useFixture(fixtures.TempDir()).path
        self.addCleanup(clip.reset_encoders)
