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

"""Run configuration and the staged experiment pipeline.

A run directory is named after the hash of the resolved configuration.
Every stage leaves a ``_SUCCESS.json`` marker keyed by the configuration
hash and the keys of the stages it depends on; a stage whose marker
matches is skipped, so re-running an identical configuration recomputes
nothing and an interrupted run resumes at the failed stage.
"""

import dataclasses
import difflib
import io
import os
import tomllib

import numpy as np
from oslo_config import cfg
from oslo_config import types
from oslo_log import log as logging
from oslo_serialization import jsonutils

from chartcast import catalog
from chartcast.common import config
from chartcast.common import constants
from chartcast.common import exceptions
from chartcast.common import utils
from chartcast.encoder import base as enc_base
from chartcast.encoder import cache as emb_cache
from chartcast import evaluation
from chartcast import experiment
from chartcast.i18n import _
from chartcast import market_data
from chartcast.representation import chart
from chartcast.representation import normalizer
from chartcast.representation import text
from chartcast.representation import windows as win

LOG = logging.getLogger(__name__)

DEFAULT_GROUP = 'DEFAULT'
SPLIT_NAMES = ('train', 'validation', 'test')

# Shorthand keys accepted at the top level of a run configuration file.
ALIASES = {
    'dataset': ('data', 'dataset_path'),
    'model': ('search', 'models'),
    'scheme': ('data', 'schemes'),
}

# Options that change where or how fast a run executes but not its results.
NON_SEMANTIC = frozenset([
    (DEFAULT_GROUP, 'output_dir'),
    ('encoder', 'cache_dir'),
    ('encoder', 'device'),
    ('encoder', 'batch_size'),
    ('encoder', 'load_retry_max_interval'),
    ('search', 'workers'),
])

# Seed streams derived from the master seed.
SEED_ENCODER = 1
SEED_SEARCH = 2
SEED_BASELINE = 3

STAGES = ('ingest', 'split', 'label', 'represent', 'embed', 'search',
          'evaluate', 'report')
DEPENDENCIES = {
    'ingest': (),
    'split': ('ingest',),
    'label': ('split',),
    'represent': ('split',),
    'embed': ('label', 'represent'),
    'search': ('embed',),
    'evaluate': ('search', 'label'),
    'report': ('evaluate',),
}


def _suggestion(value, candidates):
    matches = difflib.get_close_matches(str(value), list(candidates), n=1)
    if not matches:
        return ''
    return _(' (did you mean "%s"?)') % matches[0]


def _bounds(type_):
    low = getattr(type_, 'min', None)
    high = getattr(type_, 'max', None)
    if low is not None and high is not None:
        return '[%s, %s]' % (low, high)
    if low is not None:
        return '>= %s' % low
    if high is not None:
        return '<= %s' % high
    return None


def _coerce_scalar(key, type_, value):
    choices = getattr(type_, 'choices', None)
    if choices:
        if value not in choices:
            raise exceptions.ConfigChoiceError(
                value=value, key=key, choices=', '.join(map(str, choices)),
                hint=_suggestion(value, choices))
        return type_(value)
    if isinstance(value, bool) or isinstance(value, (dict, list)):
        raise exceptions.ConfigError(
            reason=_('"%(key)s" does not accept %(value)r') % {
                'key': key, 'value': value})
    try:
        return type_(value)
    except ValueError:
        bounds = _bounds(type_)
        try:
            # Same type without bounds tells range errors from bad input.
            type(type_)()(value)
        except (TypeError, ValueError):
            bounds = None
        if bounds is None:
            raise exceptions.ConfigError(
                reason=_('"%(key)s" does not accept %(value)r') % {
                    'key': key, 'value': value})
        raise exceptions.ConfigRangeError(value=value, key=key,
                                          bounds=bounds)


def coerce_value(group, opt, value):
    """Convert a file value through the option type, enforcing its bounds."""
    key = opt.dest if group == DEFAULT_GROUP else '%s.%s' % (group, opt.dest)
    if isinstance(opt.type, types.List):
        if isinstance(value, str):
            value = [item.strip() for item in value.split(',')
                     if item.strip()]
        elif not isinstance(value, (list, tuple)):
            value = [value]
        return [_coerce_scalar(key, opt.type.item_type, item)
                for item in value]
    return _coerce_scalar(key, opt.type, value)


def _group_names():
    return [group or DEFAULT_GROUP for group, _opts in config.OPT_GROUPS]


def _opt_names(group):
    for opt_group, opts in config.OPT_GROUPS:
        if (opt_group or DEFAULT_GROUP) == group:
            return [opt.dest for opt in opts]
    return []


def _flatten(data):
    """(group, key, value) triples of a parsed configuration mapping."""
    entries = []
    for key, value in data.items():
        if key in ALIASES:
            entries.append(ALIASES[key] + (value,))
        elif isinstance(value, dict):
            if key not in _group_names():
                raise exceptions.UnknownConfigKey(
                    key=key, hint=_suggestion(key, _group_names()))
            entries.extend((key, name, item) for name, item in value.items())
        else:
            entries.append((DEFAULT_GROUP, key, value))
    return entries


def parse_config_file(path):
    try:
        with open(path, 'rb') as handle:
            raw = handle.read()
    except OSError as e:
        raise exceptions.ConfigError(reason=e)
    try:
        if path.endswith('.json'):
            data = jsonutils.loads(raw)
        else:
            data = tomllib.loads(raw.decode('utf-8'))
    except (ValueError, tomllib.TOMLDecodeError) as e:
        raise exceptions.ConfigError(
            reason=_('cannot parse %(path)s: %(err)s') % {'path': path,
                                                           'err': e})
    if not isinstance(data, dict):
        raise exceptions.ConfigError(
            reason=_('%s does not hold a mapping') % path)
    return data


def resolve_entries(data):
    """Validated ``{(group, name): value}`` overrides from a mapping."""
    overrides = {}
    for group, name, value in _flatten(data):
        opt = config.find_opt(group, name)
        if opt is None:
            key = name if group == DEFAULT_GROUP else '%s.%s' % (group, name)
            raise exceptions.UnknownConfigKey(
                key=key, hint=_suggestion(name, _opt_names(group)))
        overrides[(group, name)] = coerce_value(group, opt, value)
    return overrides


def apply_overrides(overrides, conf=None):
    conf = conf or cfg.CONF
    for (group, name), value in overrides.items():
        conf.set_override(name, value,
                          group=None if group == DEFAULT_GROUP else group)


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Every option value of a run, resolved before any stage runs."""
    values: dict

    def get(self, group, name):
        return self.values[group][name]

    @property
    def dataset_path(self):
        return self.get('data', 'dataset_path')

    @property
    def schemes(self):
        return tuple(self.get('data', 'schemes'))

    @property
    def models(self):
        return tuple(self.get('search', 'models'))

    @property
    def seed(self):
        return self.get(DEFAULT_GROUP, 'seed')

    @property
    def output_dir(self):
        return self.get(DEFAULT_GROUP, 'output_dir')

    def split_spec(self):
        return market_data.SplitSpec(
            self.get('data', 'train_fraction'),
            self.get('data', 'validation_fraction'),
            self.get('data', 'test_fraction'))

    def semantic_values(self):
        return {group: {name: value for name, value in opts.items()
                        if (group, name) not in NON_SEMANTIC}
                for group, opts in self.values.items()}

    @property
    def config_hash(self):
        return utils.config_hash(self.semantic_values())

    @property
    def run_dir(self):
        return os.path.join(self.output_dir, 'run-%s' % self.config_hash[:12])

    def to_dict(self):
        return {'values': self.values, 'config_hash': self.config_hash}

    @classmethod
    def from_conf(cls, conf=None):
        conf = conf or cfg.CONF
        values = {}
        for group, opts in config.OPT_GROUPS:
            source = conf if group is None else getattr(conf, group)
            values[group or DEFAULT_GROUP] = {
                opt.dest: (list(getattr(source, opt.dest))
                           if isinstance(opt.type, types.List)
                           else getattr(source, opt.dest))
                for opt in opts}
        return cls(values=values)

    def validate(self):
        """Fail before any output exists when the run cannot succeed."""
        path = self.dataset_path
        if path and not os.path.isfile(path):
            raise exceptions.ConfigError(
                reason=_('dataset %s does not exist') % path)
        if not self.schemes:
            raise exceptions.ConfigError(reason=_('no label scheme given'))
        self.split_spec()
        for kind in self.models:
            catalog.get_model_spec(kind, self.get('train', 'stacked_layers'))
        experiment.SearchSpace(
            batch_sizes=tuple(self.get('search', 'batch_sizes')),
            learning_rates=tuple(self.get('search', 'learning_rates')),
            dropouts=tuple(self.get('search', 'dropouts')),
            short_weights=tuple(self.get('search', 'short_weights')),
            n_trials=self.get('search', 'trials'))
        chart.RenderConfig(**self.values['render'])
        return self


def validate_config(path=None, conf=None, overrides=None):
    """Load ``path`` into ``conf`` and return the resolved RunConfig.

    ``overrides`` maps ``(group, name)`` to values that win over the file,
    as command line flags do.
    """
    conf = conf or cfg.CONF
    entries = {}
    if path:
        entries.update(resolve_entries(parse_config_file(path)))
    for (group, name), value in (overrides or {}).items():
        opt = config.find_opt(group, name)
        if opt is None:
            raise exceptions.UnknownConfigKey(key=name, hint='')
        entries[(group, name)] = coerce_value(group, opt, value)
    apply_overrides(entries, conf)
    return RunConfig.from_conf(conf).validate()


def save_array(path, **arrays):
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    utils.atomic_write(path, buf.getvalue())


def load_array(path):
    with np.load(path, allow_pickle=False) as data:
        return {name: data[name] for name in data.files}


def load_source(run_config):
    if run_config.dataset_path:
        return market_data.ingest(run_config.dataset_path)
    LOG.info('No dataset configured, generating %(n)d synthetic bars',
             {'n': run_config.get('data', 'synthetic_bars')})
    return market_data.generate_synthetic(
        run_config.seed, run_config.get('data', 'synthetic_bars'),
        run_config.get('data', 'synthetic_volatility'))


def encoder_spec_for(spec, seed, conf=None):
    """Encoder of a catalogue model, random weights seeded from ``seed``."""
    return enc_base.EncoderSpec.from_conf(
        spec.encoder_kind, random_init=spec.random_init,
        seed=utils.derive_seed(seed, SEED_ENCODER), conf=conf)


def build_split_data(spec, part, samples, params, encoder_spec, cache=None,
                     render_config=None, frame_hours=None):
    """Embedded, stacked model inputs of one split for a catalogue model."""
    window_set = win.make_windows(
        part, samples, spec.window_kind,
        params=params if spec.normalize_inputs else None,
        frame_hours=frame_hours or win.DEFAULT_FRAME_HOURS)
    sequences = enc_base.encode_sequence(window_set, encoder_spec,
                                         cache=cache,
                                         render_config=render_config)
    features, labels = enc_base.stack(sequences)
    kept = {s.anchor for s in sequences}
    return experiment.SplitData(
        features=features, labels=labels,
        samples=tuple(s for s in samples if s.anchor_ts in kept),
        series=part)


class Pipeline():
    """Stage runner for one RunConfig."""

    def __init__(self, run_config, conf=None):
        self.run_config = run_config
        self.conf = conf or cfg.CONF
        self.run_dir = run_config.run_dir
        self.config_hash = run_config.config_hash
        self.executed = []
        self.skipped = []
        self._keys = {}

    def path(self, *parts):
        return os.path.join(self.run_dir, *parts)

    def _marker(self, stage):
        return self.path(stage, constants.STAGE_MARKER)

    def _stage_key(self, stage):
        return utils.sha256_hex(
            self.config_hash, stage,
            *[self._keys[dep] for dep in DEPENDENCIES[stage]])

    def _is_done(self, stage, key):
        marker = self._marker(stage)
        if not os.path.exists(marker):
            return False
        return utils.read_json(marker).get('key') == key

    def _closure(self, targets):
        wanted = set()
        stack = list(targets)
        while stack:
            stage = stack.pop()
            if stage not in DEPENDENCIES:
                raise exceptions.ConfigChoiceError(
                    value=stage, key='stage', choices=', '.join(STAGES),
                    hint=_suggestion(stage, STAGES))
            if stage not in wanted:
                wanted.add(stage)
                stack.extend(DEPENDENCIES[stage])
        return [stage for stage in STAGES if stage in wanted]

    def run(self, targets=None):
        stages = self._closure(targets or STAGES)
        utils.ensure_dir(self.run_dir)
        utils.write_json(self.path('run_config.json'),
                         self.run_config.to_dict())
        for stage in stages:
            key = self._stage_key(stage)
            self._keys[stage] = key
            if self._is_done(stage, key):
                LOG.info('Stage %(stage)s is up to date, skipping',
                         {'stage': stage})
                self.skipped.append(stage)
                continue
            LOG.info('Stage %(stage)s starting', {'stage': stage})
            utils.ensure_dir(self.path(stage))
            try:
                outputs = getattr(self, '_stage_%s' % stage)()
            except Exception as e:
                LOG.exception(constants.EXCEPTION_MSG, 'stage %s' % stage)
                raise exceptions.StageFailed(stage=stage, cause=e) from e
            utils.write_json(self._marker(stage), {
                'stage': stage, 'key': key,
                'config_hash': self.config_hash,
                'outputs': sorted(outputs or [])})
            self.executed.append(stage)
            LOG.info('Stage %(stage)s finished', {'stage': stage})
        LOG.info('Run %(dir)s: executed %(executed)s, skipped %(skipped)s',
                 {'dir': self.run_dir, 'executed': self.executed,
                  'skipped': self.skipped})
        return self.run_dir

    # Helpers reading earlier stage outputs.

    def series(self):
        return market_data.ingest(self.path('ingest', market_data.SERIES_FILE))

    def parts(self):
        return tuple(market_data.ingest(self.path('split', '%s.csv' % name))
                     for name in SPLIT_NAMES)

    def samples(self, scheme, split_name, part):
        return market_data.read_samples(
            self.path('label', scheme, '%s.jsonl' % split_name), part)

    def normalizer(self):
        return normalizer.load(self.path('represent', 'normalizer.json'))

    def cache(self):
        directory = (self.run_config.get('encoder', 'cache_dir') or
                     self.path('cache'))
        return emb_cache.EmbeddingCache(directory)

    def model_spec(self, kind):
        return catalog.get_model_spec(
            kind, self.run_config.get('train', 'stacked_layers'))

    def encoder_spec(self, spec):
        return encoder_spec_for(spec, self.run_config.seed, self.conf)

    def split_data(self, kind, scheme, split_name, part):
        data = load_array(self.path('embed', kind, scheme,
                                    '%s.npz' % split_name))
        samples = self.samples(scheme, split_name, part)
        kept = set(data['anchors'].tolist())
        return experiment.SplitData(
            features=data['features'], labels=data['labels'],
            samples=tuple(s for s in samples
                          if market_data.format_ts(s.anchor_ts) in kept),
            series=part)

    def collect(self):
        results, _empty = experiment.collect_results(self.path('search'))
        _none, baselines = experiment.collect_results(self.path('evaluate'))
        return results, baselines

    # Stages. Each returns the run-relative paths it wrote.

    def _stage_ingest(self):
        series = load_source(self.run_config)
        market_data.write_series(
            self.path('ingest', market_data.SERIES_FILE), series)
        return ['ingest/%s' % market_data.SERIES_FILE]

    def _stage_split(self):
        parts = market_data.split(self.series(), self.run_config.split_spec())
        outputs = []
        bounds = {}
        for name, part in zip(SPLIT_NAMES, parts):
            market_data.write_series(self.path('split', '%s.csv' % name),
                                     part)
            outputs.append('split/%s.csv' % name)
            bounds[name] = {'first': market_data.format_ts(part[0].timestamp),
                            'last': market_data.format_ts(part[-1].timestamp),
                            'bars': len(part)}
        utils.write_json(self.path('split', 'split.json'),
                         dict(bounds, config_hash=self.config_hash))
        return outputs + ['split/split.json']

    def _stage_label(self):
        parts = self.parts()
        outputs = []
        for scheme_name in self.run_config.schemes:
            scheme = market_data.LabelScheme.from_name(scheme_name)
            for name, part in zip(SPLIT_NAMES, parts):
                path = self.path('label', scheme_name, '%s.jsonl' % name)
                market_data.write_samples(path,
                                          market_data.label(part, scheme))
                outputs.append(os.path.relpath(path, self.run_dir))
            stats = market_data.split_statistics(parts, scheme)
            market_data.write_statistics(
                self.path('label', scheme_name, 'statistics.json'), stats,
                scheme=scheme_name, config_hash=self.config_hash)
            utils.atomic_write(
                self.path('label', scheme_name, 'statistics.txt'),
                market_data.render_statistics_table(
                    stats, title=evaluation.SECTION_TITLES[scheme_name]))
            outputs += ['label/%s/statistics.json' % scheme_name,
                        'label/%s/statistics.txt' % scheme_name]
        return outputs

    def _stage_represent(self):
        parts = self.parts()
        params = normalizer.fit_normalizer(parts[0])
        normalizer.save(self.path('represent', 'normalizer.json'), params)
        outputs = ['represent/normalizer.json']
        for name, part in zip(SPLIT_NAMES, parts):
            path = self.path('represent', 'text', '%s.jsonl' % name)
            utils.write_jsonl(path, [
                {'anchor_ts': market_data.format_ts(bar.timestamp),
                 'text': str(text.serialize_text(bar))} for bar in part])
            outputs.append(os.path.relpath(path, self.run_dir))
        utils.write_json(self.path('represent', 'render.json'), dict(
            chart.RenderConfig.from_conf(self.conf).to_dict(),
            config_hash=self.config_hash))
        return outputs + ['represent/render.json']

    def _stage_embed(self):
        parts = self.parts()
        params = self.normalizer()
        render_config = chart.RenderConfig.from_conf(self.conf)
        cache = self.cache()
        outputs = []
        for kind in self.run_config.models:
            spec = self.model_spec(kind)
            encoder_spec = self.encoder_spec(spec)
            for scheme in self.run_config.schemes:
                for name, part in zip(SPLIT_NAMES, parts):
                    data = build_split_data(
                        spec, part, self.samples(scheme, name, part), params,
                        encoder_spec, cache=cache,
                        render_config=render_config,
                        frame_hours=render_config.window_hours)
                    if not len(data.samples):
                        raise exceptions.NoSamples()
                    path = self.path('embed', kind, scheme, '%s.npz' % name)
                    save_array(path, features=data.features,
                               labels=data.labels,
                               anchors=np.array(
                                   [market_data.format_ts(s.anchor_ts)
                                    for s in data.samples]))
                    outputs.append(os.path.relpath(path, self.run_dir))
        utils.write_json(self.path('embed', 'cache.json'),
                         dict(cache.stats(), config_hash=self.config_hash))
        return outputs

    def _stage_search(self):
        parts = self.parts()
        outputs = []
        search_dir = self.path('search')
        for kind in self.run_config.models:
            model_index = catalog.MODEL_KINDS.index(kind)
            for scheme_name in self.run_config.schemes:
                scheme = market_data.LabelScheme.from_name(scheme_name)
                data = [self.split_data(kind, scheme_name, name, part)
                        for name, part in zip(SPLIT_NAMES, parts)]
                space = experiment.SearchSpace.from_conf(
                    utils.derive_seed(
                        self.run_config.seed, SEED_SEARCH, model_index,
                        constants.LABEL_SCHEMES.index(scheme_name)),
                    conf=self.conf)
                experiment.run_search(
                    kind, scheme, space, *data, run_dir=search_dir,
                    top_k=self.run_config.get('search', 'top_k'),
                    workers=self.run_config.get('search', 'workers'),
                    conf=self.conf)
                outputs.append(os.path.join('search', kind, scheme_name,
                                            experiment.RESULT_FILE))
        return outputs

    def _stage_evaluate(self):
        parts = self.parts()
        test = parts[-1]
        outputs = []
        for scheme_name in self.run_config.schemes:
            scheme = market_data.LabelScheme.from_name(scheme_name)
            samples = self.samples(scheme_name, 'test', test)
            reports = experiment.baseline_reports(
                samples, test, scheme,
                utils.derive_seed(self.run_config.seed, SEED_BASELINE))
            directory = self.path('evaluate', scheme_name)
            experiment.write_baselines(directory, scheme_name, reports,
                                       config_hash=self.config_hash)
            outputs.append(os.path.relpath(
                os.path.join(directory, experiment.BASELINE_FILE),
                self.run_dir))
        results, baselines = self.collect()
        metrics = {
            'config_hash': self.config_hash,
            'models': {r.model_kind: {} for r in results},
            'baselines': {scheme: {name: report.to_dict()
                                   for name, report in reports.items()}
                          for scheme, reports in baselines.items()},
        }
        for result in results:
            metrics['models'][result.model_kind][result.scheme] = {
                'selected': result.selected,
                'aggregate': result.aggregate.to_dict()}
        utils.write_json(self.path('metrics.json'), metrics)
        return outputs + ['metrics.json']

    def _stage_report(self):
        results, baselines = self.collect()
        table = experiment.render_report(results, baselines)
        utils.atomic_write(self.path('report', 'report.txt'), table)
        utils.atomic_write(self.path('report.txt'), table)
        LOG.info('Results table:\n%s', table)
        return ['report/report.txt', 'report.txt']


def run_pipeline(run_config, conf=None, targets=None):
    """Run (or resume) every stage of ``run_config``; returns the run dir."""
    pipeline = Pipeline(run_config, conf=conf)
    return pipeline.run(targets)
