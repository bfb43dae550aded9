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

from chartcast.i18n import _


class ChartcastException(Exception):
    """Base chartcast exception.

    Subclasses define a ``message`` template whose ``%(name)s`` fields are
    filled from the keyword arguments given to the constructor, and an
    ``exit_code`` returned by the command line front-end.
    """
    message = _('An unknown exception occurred.')
    exit_code = 1

    def __init__(self, **kwargs):
        try:
            super().__init__(self.message % kwargs)
            self.msg = self.message % kwargs
        except Exception:
            # at least get the core message out if something happened
            super().__init__(self.message)
            self.msg = self.message
        self.kwargs = kwargs

    def __str__(self):
        return self.msg


class ConfigError(ChartcastException):
    message = _('Invalid configuration: %(reason)s')
    exit_code = 2


class UnknownConfigKey(ConfigError):
    message = _('Unknown configuration key "%(key)s"%(hint)s')


class ConfigRangeError(ConfigError):
    message = _('Value %(value)s for "%(key)s" is out of range, expected '
                '%(bounds)s')


class ConfigChoiceError(ConfigError):
    message = _('Value "%(value)s" for "%(key)s" is not one of '
                '%(choices)s%(hint)s')


class KindMismatch(ConfigError):
    message = _('Encoder kind %(encoder)s cannot consume %(window)s '
                'windows')


class DimensionMismatch(ConfigError):
    message = _('Sequence dimension %(got)s does not match the model input '
                'dimension %(expected)s')


class DataError(ChartcastException):
    message = _('Invalid data: %(reason)s')
    exit_code = 3


class ParseError(DataError):
    message = _('Cannot parse row %(row)s of %(path)s: %(reason)s')


class ValidationError(DataError):
    message = _('Validation failed: %(reason)s')


class NoRows(DataError):
    message = _('no rows in %(path)s')


class NoSamples(DataError):
    message = _('no samples')


class ZeroStdError(DataError):
    message = _('Feature %(feature)s has zero standard deviation in the '
                'training data')


class WindowLengthError(DataError):
    message = _('Chart window has %(got)s bars, expected %(expected)s')


class MisalignedAnchors(DataError):
    message = _('Decisions and labels are not aligned: %(reason)s')


class TooFewPoints(DataError):
    message = _('At least %(minimum)s embeddings are needed, got %(got)s')


class EncoderError(ChartcastException):
    message = _('Encoder failure: %(reason)s')
    exit_code = 4


class CheckpointLoadError(EncoderError):
    message = _('Cannot load encoder checkpoint %(checkpoint)s: %(reason)s')


class UnsupportedEncoder(EncoderError):
    message = _('Encoder %(encoder)s does not support %(feature)s')


class TrainingError(ChartcastException):
    message = _('Training failure: %(reason)s')
    exit_code = 5


class TrainingDiverged(TrainingError):
    message = _('Training diverged at epoch %(epoch)s, batch %(batch)s: '
                'loss is %(loss)s')


class StageFailed(ChartcastException):
    message = _('Pipeline stage %(stage)s failed: %(cause)s')
    exit_code = 6
