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

"""Random grid search with validation-F1 selection.

Trials train independently, possibly in worker processes. Only after every
trial has finished are the top ``k`` trials chosen, and only those are
evaluated on the test split; ``audit.jsonl`` records that order.
"""

import dataclasses
import datetime
import itertools
import os

import futurist
import numpy as np
from oslo_config import cfg
from oslo_log import log as logging

from chartcast import catalog
from chartcast.common import constants
from chartcast.common import exceptions
from chartcast.common import utils
from chartcast import evaluation
from chartcast.forecaster import dain as dain_mod
from chartcast.forecaster import model as model_mod
from chartcast.forecaster import training
from chartcast.i18n import _
from chartcast import strategy

LOG = logging.getLogger(__name__)

STATUS_OK = 'ok'
STATUS_FAILED = 'failed'
RESULT_FILE = 'result.json'
BASELINE_FILE = 'baselines.json'


@dataclasses.dataclass(frozen=True)
class SearchSpace:
    batch_sizes: tuple = tuple(constants.SEARCH_BATCH_SIZES)
    learning_rates: tuple = tuple(constants.SEARCH_LEARNING_RATES)
    dropouts: tuple = tuple(constants.SEARCH_DROPOUTS)
    short_weights: tuple = tuple(constants.SEARCH_SHORT_WEIGHTS)
    n_trials: int = 30
    seed: int = 0

    def __post_init__(self):
        if self.n_trials < 1:
            raise exceptions.ConfigRangeError(value=self.n_trials,
                                              key='trials', bounds='>= 1')
        if self.n_trials > self.size:
            raise exceptions.ConfigRangeError(
                value=self.n_trials, key='trials',
                bounds=_('<= %d, the size of the search grid') % self.size)

    @property
    def size(self):
        return (len(self.batch_sizes) * len(self.learning_rates) *
                len(self.dropouts) * len(self.short_weights))

    def grid(self):
        return [{'batch_size': bs, 'learning_rate': lr, 'dropout': dr,
                 'short_weight': w}
                for bs, lr, dr, w in itertools.product(
                    self.batch_sizes, self.learning_rates, self.dropouts,
                    self.short_weights)]

    def sample(self):
        """``n_trials`` grid points drawn without replacement."""
        rng = np.random.default_rng(self.seed)
        grid = self.grid()
        picks = rng.choice(len(grid), size=self.n_trials, replace=False)
        return [grid[int(i)] for i in picks]

    @classmethod
    def from_conf(cls, seed, n_trials=None, conf=None):
        group = (conf or cfg.CONF).search
        return cls(batch_sizes=tuple(group.batch_sizes),
                   learning_rates=tuple(group.learning_rates),
                   dropouts=tuple(group.dropouts),
                   short_weights=tuple(group.short_weights),
                   n_trials=n_trials or group.trials,
                   seed=seed)


@dataclasses.dataclass(frozen=True)
class SplitData:
    """Stacked sequences of one split with the samples they came from."""
    features: np.ndarray
    labels: np.ndarray
    samples: tuple = ()
    series: object = None


@dataclasses.dataclass
class TrialResult:
    index: int
    params: dict
    seed: int
    status: str = STATUS_OK
    validation_f1: float = None
    error: str = None
    test_report: evaluation.MetricsReport = None

    def to_dict(self):
        return {'index': self.index, 'params': self.params,
                'seed': self.seed, 'status': self.status,
                'validation_f1': self.validation_f1, 'error': self.error,
                'test_report': (self.test_report.to_dict()
                                if self.test_report else None)}


@dataclasses.dataclass
class ExperimentResult:
    model_kind: str
    scheme: str
    trials: list
    selected: list
    aggregate: evaluation.MetricsReport = None

    def to_dict(self):
        return {'model_kind': self.model_kind, 'scheme': self.scheme,
                'trials': [t.to_dict() for t in self.trials],
                'selected': list(self.selected),
                'aggregate': (self.aggregate.to_dict()
                              if self.aggregate else None)}

    @classmethod
    def from_dict(cls, data):
        trials = []
        for item in data['trials']:
            report = item.get('test_report')
            trials.append(TrialResult(
                index=item['index'], params=item['params'],
                seed=item['seed'], status=item['status'],
                validation_f1=item.get('validation_f1'),
                error=item.get('error'),
                test_report=(evaluation.MetricsReport.from_dict(report)
                             if report else None)))
        aggregate = data.get('aggregate')
        return cls(model_kind=data['model_kind'], scheme=data['scheme'],
                   trials=trials, selected=list(data['selected']),
                   aggregate=(evaluation.MetricsReport.from_dict(aggregate)
                              if aggregate else None))


def select_top(trials, top_k):
    """Indices of the best ``top_k`` successful trials by validation F1.

    Ties go to the lower trial index.
    """
    ok = [t for t in trials if t.status == STATUS_OK]
    ranked = sorted(ok, key=lambda t: (-t.validation_f1, t.index))
    return [t.index for t in ranked[:top_k]]


def trial_dir(run_dir, model_kind, scheme, index):
    return os.path.join(run_dir, model_kind, scheme, 'trial_%d' % index)


def _run_trial(payload):
    """Train one configuration; runs in a worker."""
    directory = payload['directory']
    result = {'index': payload['index'], 'status': STATUS_OK,
              'validation_f1': None, 'error': None}
    try:
        trained = training.train(payload['head_config'],
                                 payload['train'], payload['validation'],
                                 payload['train_config'],
                                 payload['dain_config'])
    except (exceptions.TrainingError, exceptions.ConfigError) as e:
        result.update(status=STATUS_FAILED, error=str(e))
        return result
    training.save_checkpoint(directory, trained,
                             config_hash=payload['config_hash'])
    result['validation_f1'] = trained.validation_f1
    return result


def _executor(workers):
    if workers <= 1:
        return futurist.SynchronousExecutor()
    return futurist.ProcessPoolExecutor(max_workers=workers)


def _audit(run_dir, event, **fields):
    record = {'event': event,
              'time': datetime.datetime.now(datetime.timezone.utc)
              .isoformat()}
    record.update(fields)
    utils.append_jsonl(os.path.join(run_dir, constants.AUDIT_LOG), record)


def _reuse_trial(directory, config_hash):
    """Result of a finished trial with the same configuration, if any."""
    path = os.path.join(directory, 'config.json')
    if not os.path.exists(path):
        return None
    stored = utils.read_json(path)
    if stored.get('config_hash') != config_hash or 'status' not in stored:
        return None
    return stored


def head_config_for(spec, input_dim, dropout, conf=None):
    group = (conf or cfg.CONF).train
    return model_mod.LstmHeadConfig(input_dim=input_dim,
                                    hidden_dim=group.hidden_dim,
                                    num_layers=spec.num_layers,
                                    mlp_hidden=group.mlp_hidden,
                                    dropout=dropout)


def dain_config_for(spec, input_dim, conf=None):
    if not spec.use_dain:
        return None
    group = (conf or cfg.CONF).train
    return dain_mod.DainConfig(shift_lr=group.dain_shift_lr,
                               scale_lr=group.dain_scale_lr,
                               gate_lr=group.dain_gate_lr,
                               feature_dim=input_dim)


def evaluate_on_test(trained, data, scheme):
    """Metrics of a trained model over the test split."""
    probs = trained.predict_proba(data.features)
    decisions = strategy.decisions_from_probabilities(data.samples, probs)
    return evaluation.evaluate(decisions, list(data.samples), data.series,
                               scheme)


def run_search(model_kind, scheme, space, train_data, validation_data,
               test_data, run_dir, top_k=3, workers=1, conf=None):
    """Search ``space`` for ``model_kind`` under ``scheme``.

    ``scheme`` is a market_data.LabelScheme. Trial artifacts land in
    ``run_dir/<model>/<scheme>/trial_<k>/``.
    """
    conf = conf or cfg.CONF
    spec = catalog.get_model_spec(model_kind, conf.train.stacked_layers)
    input_dim = int(train_data.features.shape[-1])
    dain_config = dain_config_for(spec, input_dim, conf)
    base_dir = os.path.join(run_dir, model_kind, scheme.name)
    utils.ensure_dir(base_dir)

    trials = []
    pending = []
    for index, params in enumerate(space.sample()):
        seed = utils.derive_seed(space.seed, index)
        head_config = head_config_for(spec, input_dim, params['dropout'],
                                      conf)
        train_config = training.TrainConfig.from_conf(
            seed, conf=conf, batch_size=params['batch_size'],
            learning_rate=params['learning_rate'],
            dropout=params['dropout'],
            short_weight=params['short_weight'])
        directory = trial_dir(run_dir, model_kind, scheme.name, index)
        utils.ensure_dir(directory)
        config_record = {
            'model_kind': model_kind, 'scheme': scheme.name,
            'params': params, 'seed': seed,
            'head_config': dataclasses.asdict(head_config),
            'train_config': dataclasses.asdict(train_config),
            'dain_config': (dataclasses.asdict(dain_config)
                            if dain_config else None),
            'n_train': int(len(train_data.features)),
            'short_weight_formula': constants.SHORT_WEIGHT_FORMULA}
        config_hash = utils.config_hash(config_record)
        trial = TrialResult(index=index, params=params, seed=seed)
        trials.append(trial)

        stored = _reuse_trial(directory, config_hash)
        if stored is not None:
            LOG.info('Reusing finished trial %(index)d of %(model)s',
                     {'index': index, 'model': model_kind})
            trial.status = stored['status']
            trial.validation_f1 = stored.get('validation_f1')
            trial.error = stored.get('error')
            continue
        config_record['config_hash'] = config_hash
        utils.write_json(os.path.join(directory, 'config.json'),
                         config_record)
        pending.append((trial, config_record, {
            'index': index, 'directory': directory,
            'config_hash': config_hash,
            'head_config': head_config, 'dain_config': dain_config,
            'train_config': train_config,
            'train': (train_data.features, train_data.labels),
            'validation': (validation_data.features,
                           validation_data.labels)}))

    with _executor(workers) as executor:
        futures = [(trial, record, executor.submit(_run_trial, payload))
                   for trial, record, payload in pending]
        for trial, record, future in futures:
            outcome = future.result()
            trial.status = outcome['status']
            trial.validation_f1 = outcome['validation_f1']
            trial.error = outcome['error']
            if trial.status == STATUS_FAILED:
                LOG.warning('Trial %(index)d of %(model)s/%(scheme)s '
                            'failed: %(error)s',
                            {'index': trial.index, 'model': model_kind,
                             'scheme': scheme.name, 'error': trial.error})
            record.update(status=trial.status,
                          validation_f1=trial.validation_f1,
                          error=trial.error)
            utils.write_json(os.path.join(
                trial_dir(run_dir, model_kind, scheme.name, trial.index),
                'config.json'), record)

    _audit(base_dir, 'trials_finished',
           trials=[t.index for t in trials],
           failed=[t.index for t in trials if t.status == STATUS_FAILED])
    selected = select_top(trials, top_k)
    _audit(base_dir, 'selected', trials=selected)
    if not selected:
        raise exceptions.TrainingError(
            reason=_('every trial of %s failed') % model_kind)

    by_index = {t.index: t for t in trials}
    for index in selected:
        directory = trial_dir(run_dir, model_kind, scheme.name, index)
        trained = training.load_checkpoint(directory)
        report = evaluate_on_test(trained, test_data, scheme)
        by_index[index].test_report = report
        utils.write_json(os.path.join(directory, 'metrics.json'),
                         dict(report.to_dict(), trial=index))
        _audit(base_dir, 'test_evaluated', trial=index)

    result = ExperimentResult(
        model_kind=model_kind, scheme=scheme.name, trials=trials,
        selected=selected,
        aggregate=evaluation.mean_reports(
            by_index[i].test_report for i in selected))
    utils.write_json(os.path.join(base_dir, RESULT_FILE), result.to_dict())
    LOG.info('Search %(model)s/%(scheme)s selected trials %(selected)s',
             {'model': model_kind, 'scheme': scheme.name,
              'selected': selected})
    return result


def baseline_reports(samples, series, scheme, seed):
    """Reports of the three reference strategies over ``samples``."""
    reports = {}
    for name in constants.STRATEGIES:
        decisions = strategy.run_strategy(name, samples, seed)
        reports[name] = evaluation.evaluate(decisions, list(samples),
                                            series, scheme)
    return reports


def render_report(results, baselines=None):
    """Table of baselines then models, one section per label scheme.

    ``baselines`` maps a scheme name to {strategy: MetricsReport}.
    """
    rows = {}
    for scheme, reports in (baselines or {}).items():
        rows.setdefault(scheme, []).extend(
            (constants.STRATEGY_DISPLAY_NAMES[name], reports[name])
            for name in constants.STRATEGIES if name in reports)
    order = {kind: i for i, kind in enumerate(catalog.MODEL_KINDS)}
    for result in sorted(results, key=lambda r: order.get(r.model_kind,
                                                          len(order))):
        if result.aggregate is None:
            continue
        name = catalog.MODELS[result.model_kind].display_name
        rows.setdefault(result.scheme, []).append((name, result.aggregate))
    return evaluation.render_table(rows)


def collect_results(run_dir):
    """Every ExperimentResult and baseline set stored under ``run_dir``."""
    results = []
    baselines = {}
    for root, _dirs, files in sorted(os.walk(run_dir)):
        if RESULT_FILE in files:
            results.append(ExperimentResult.from_dict(
                utils.read_json(os.path.join(root, RESULT_FILE))))
        if BASELINE_FILE in files:
            data = utils.read_json(os.path.join(root, BASELINE_FILE))
            baselines[data['scheme']] = {
                name: evaluation.MetricsReport.from_dict(report)
                for name, report in data['reports'].items()}
    return results, baselines


def write_baselines(directory, scheme, reports, **provenance):
    data = {'scheme': scheme,
            'reports': {name: r.to_dict() for name, r in reports.items()}}
    data.update(provenance)
    utils.write_json(os.path.join(directory, BASELINE_FILE), data)
