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

import os
import sys

import numpy as np
from oslo_config import cfg
from oslo_log import log as logging
from oslo_serialization import jsonutils

from chartcast import analysis
from chartcast import catalog
from chartcast.common import config
from chartcast.common import constants
from chartcast.common import exceptions
from chartcast.common import utils
from chartcast.encoder import base as enc_base
from chartcast.encoder import cache as emb_cache
from chartcast.encoder import clip
from chartcast import evaluation
from chartcast import experiment
from chartcast.forecaster import training
from chartcast.i18n import _
from chartcast import market_data
from chartcast import pipeline
from chartcast.representation import chart
from chartcast.representation import normalizer
from chartcast.representation import text
from chartcast import strategy

LOG = logging.getLogger(__name__)

ANALYSES = ('relevance', 'tsne', 'numbers')


def _write(content):
    sys.stdout.write(content)
    sys.stdout.flush()


def _scheme(name):
    return market_data.LabelScheme.from_name(name)


def _cache_dir(run_config):
    return (run_config.get('encoder', 'cache_dir') or
            os.path.join(run_config.output_dir, 'cache'))


def _labeled(args):
    series = market_data.ingest(args.input)
    return series, market_data.read_samples(args.labels, series)


def do_ingest(conf, run_config):
    args = conf.command
    source = args.input or args.path
    if not source:
        raise exceptions.ConfigError(
            reason=_('ingest needs an input file'))
    output = args.output or os.path.join(run_config.output_dir,
                                         market_data.SERIES_FILE)
    series = market_data.ingest(source, fmt=args.format)
    market_data.write_series(output, series)
    LOG.info('Wrote %(count)d bars to %(path)s',
             {'count': len(series), 'path': output})


def do_synth(conf, run_config):
    args = conf.command
    series = market_data.generate_synthetic(
        run_config.seed,
        args.bars or run_config.get('data', 'synthetic_bars'),
        run_config.get('data', 'synthetic_volatility'))
    market_data.write_series(args.output, series)


def do_label(conf, run_config):
    args = conf.command
    samples = market_data.label(market_data.ingest(args.input),
                                _scheme(args.scheme))
    market_data.write_samples(args.output, samples)
    LOG.info('Labeled %(count)d anchors', {'count': len(samples)})


def do_stats(conf, run_config):
    args = conf.command
    series = market_data.ingest(args.input)
    scheme = _scheme(args.scheme)
    if args.splits:
        parts = market_data.split(series, run_config.split_spec())
        stats = market_data.split_statistics(parts, scheme)
        _write(market_data.render_statistics_table(
            stats, title=evaluation.SECTION_TITLES[scheme.name]))
    else:
        stats = market_data.statistics(market_data.label(series, scheme))
        _write('%s\n' % jsonutils.dumps(stats.to_dict(), indent=2,
                                        sort_keys=True))
    if args.output:
        market_data.write_statistics(args.output, stats, scheme=scheme.name,
                                     config_hash=run_config.config_hash)


def do_render(conf, run_config):
    args = conf.command
    series, samples = _labeled(args)
    manifest = chart.render_anchors(series, samples, args.output_dir,
                                    chart.RenderConfig.from_conf(conf))
    LOG.info('Rendered %(count)d charts into %(dir)s',
             {'count': len(manifest), 'dir': args.output_dir})


def do_textify(conf, run_config):
    args = conf.command
    series = market_data.ingest(args.input)
    utils.write_jsonl(args.output, [
        {'anchor_ts': market_data.format_ts(bar.timestamp),
         'text': str(text.serialize_text(bar))} for bar in series])


def _normalizer(path, series):
    if path and os.path.exists(path):
        return normalizer.load(path)
    params = normalizer.fit_normalizer(series)
    if path:
        normalizer.save(path, params)
        LOG.info('Fitted normalizer on %(count)d bars, saved to %(path)s',
                 {'count': len(series), 'path': path})
    return params


def do_embed(conf, run_config):
    args = conf.command
    series, samples = _labeled(args)
    spec = catalog.get_model_spec(args.model, conf.train.stacked_layers)
    params = (_normalizer(args.normalizer, series)
              if spec.normalize_inputs else None)
    render_config = chart.RenderConfig.from_conf(conf)
    cache = emb_cache.EmbeddingCache(_cache_dir(run_config))
    data = pipeline.build_split_data(
        spec, series, samples, params,
        pipeline.encoder_spec_for(spec, run_config.seed, conf),
        cache=cache, render_config=render_config,
        frame_hours=render_config.window_hours)
    pipeline.save_array(
        args.output, features=data.features, labels=data.labels,
        anchors=np.array([market_data.format_ts(s.anchor_ts)
                          for s in data.samples]))
    LOG.info('Embedded %(count)d sequences, cache %(stats)s',
             {'count': len(data.samples), 'stats': cache.stats()})


def _anchors(arrays):
    return [market_data.parse_ts(a) for a in arrays['anchors'].tolist()]


def do_train(conf, run_config):
    args = conf.command
    spec = catalog.get_model_spec(args.model, conf.train.stacked_layers)
    train = pipeline.load_array(args.train)
    validation = pipeline.load_array(args.validation)
    input_dim = int(train['features'].shape[-1])
    trained = training.train(
        experiment.head_config_for(spec, input_dim, conf.train.dropout,
                                   conf),
        (train['features'], train['labels']),
        (validation['features'], validation['labels']),
        training.TrainConfig.from_conf(run_config.seed, conf),
        experiment.dain_config_for(spec, input_dim, conf))
    training.save_checkpoint(args.output, trained, model_kind=args.model,
                             scheme=args.label,
                             config_hash=run_config.config_hash)
    if args.predictions:
        target = pipeline.load_array(args.test or args.validation)
        decisions = strategy.decisions_from_probabilities(
            _anchors(target), trained.predict_proba(target['features']))
        strategy.write_decisions(args.predictions, decisions)
        LOG.info('Wrote %(count)d predictions to %(path)s',
                 {'count': len(decisions), 'path': args.predictions})


def do_baseline(conf, run_config):
    args = conf.command
    _series, samples = _labeled(args)
    strategy.write_decisions(
        args.output, strategy.run_strategy(
            args.strategy, samples,
            utils.derive_seed(run_config.seed, pipeline.SEED_BASELINE)))


def do_eval(conf, run_config):
    args = conf.command
    series, samples = _labeled(args)
    decisions = strategy.read_decisions(args.predictions)
    wanted = {d.anchor for d in decisions}
    samples = [s for s in samples if s.anchor_ts in wanted]
    report = evaluation.evaluate(decisions, samples, series,
                                 _scheme(args.scheme))
    name = args.display_name or os.path.basename(args.predictions)
    _write(evaluation.render_table({args.scheme: [(name, report)]}))
    if args.output:
        utils.write_json(args.output, dict(
            report.to_dict(), config_hash=run_config.config_hash))


def do_search(conf, run_config):
    args = conf.command
    overrides = {('search', 'models'): [args.model],
                 ('data', 'schemes'): [args.scheme]}
    if args.trials:
        overrides[('search', 'trials')] = args.trials
    pipeline.apply_overrides(
        {key: pipeline.coerce_value(key[0], config.find_opt(*key), value)
         for key, value in overrides.items()}, conf)
    run_config = pipeline.RunConfig.from_conf(conf).validate()
    run_dir = pipeline.run_pipeline(run_config, conf=conf,
                                    targets=['search'])
    _write('%s\n' % os.path.join(run_dir, 'search', args.model,
                                 args.scheme, experiment.RESULT_FILE))


def do_report(conf, run_config):
    results, baselines = experiment.collect_results(conf.command.runs)
    _write(experiment.render_report(results, baselines))


def do_run(conf, run_config):
    _write('%s\n' % pipeline.run_pipeline(run_config, conf=conf))


def _text_handle(conf, seed):
    return clip.get_encoder(enc_base.EncoderSpec.from_conf(
        constants.ENCODER_TEXT, seed=seed, conf=conf))


def _analyze_numbers(conf, run_config, directory, provenance):
    projection, summary = analysis.number_embedding_study(
        conf.analysis.number_range, _text_handle(conf, run_config.seed),
        run_config.seed, bucket_size=conf.analysis.bucket_size,
        perplexity=conf.analysis.perplexity)
    analysis.write_projection(os.path.join(directory, 'numbers.csv'),
                              projection)
    analysis.write_summary(os.path.join(directory, 'numbers.json'),
                           {'buckets': summary}, **provenance)


def _analyze_tsne(conf, run_config, directory, provenance):
    args = conf.command
    arrays = pipeline.load_array(args.embeddings)
    # One point per anchor: the embedding of its most recent item.
    vectors = arrays['features'][:, -1, :]
    anchors = arrays['anchors'].tolist()
    projection = analysis.project_embeddings(
        vectors, arrays['labels'].tolist(), anchors, run_config.seed,
        perplexity=conf.analysis.perplexity)
    analysis.write_projection(os.path.join(directory, 'tsne.csv'),
                              projection)
    analysis.write_summary(
        os.path.join(directory, 'tsne.json'),
        {'trajectory': analysis.trajectory_score(projection,
                                                 run_config.seed)},
        **provenance)


def _analyze_relevance(conf, run_config, directory, provenance):
    args = conf.command
    series, samples = _labeled(args)
    spec = catalog.get_model_spec(args.model_kind)
    if spec.encoder_kind != constants.ENCODER_IMAGE:
        raise exceptions.UnsupportedEncoder(encoder=spec.kind,
                                            feature=_('relevance maps'))
    encoder_spec = pipeline.encoder_spec_for(spec, run_config.seed, conf)
    handle = clip.get_encoder(encoder_spec)
    render_config = chart.RenderConfig.from_conf(conf)
    data = pipeline.build_split_data(
        spec, series, samples, None, encoder_spec,
        cache=emb_cache.EmbeddingCache(_cache_dir(run_config)),
        render_config=render_config, frame_hours=render_config.window_hours)
    trained = training.load_checkpoint(args.model) if args.model else None
    labels = [s.label for s in data.samples]
    predictions = (trained.predict_proba(data.features).argmax(axis=1)
                   if trained else labels)
    index = {s.anchor_ts: i for i, s in enumerate(data.samples)}
    cases = []
    for direction in (constants.LABEL_LONG, constants.LABEL_SHORT):
        picked = analysis.select_cases(
            list(data.samples), predictions, labels, direction, args.count,
            utils.derive_seed(run_config.seed, direction))
        for sample in picked:
            row = index[sample.anchor_ts]
            target = None
            if trained is not None:
                target = analysis.forecaster_target(
                    trained, enc_base.EmbeddingSequence(
                        vectors=data.features[row], anchor=sample.anchor_ts,
                        label=sample.label, kind=spec.window_kind),
                    class_index=direction)
            frame = series[sample.anchor_index -
                           render_config.window_hours + 1:
                           sample.anchor_index + 1]
            image = chart.render_chart(frame, render_config)
            rmap = analysis.relevance(image, target, handle,
                                      alpha=conf.analysis.overlay_alpha)
            path = analysis.save_relevance(directory, sample.anchor_ts, rmap)
            cases.append({
                'anchor_ts': market_data.format_ts(sample.anchor_ts),
                'direction': direction, 'file': os.path.basename(path),
                'line_mass_ratio': analysis.line_mass_ratio(rmap, image)})
    analysis.write_summary(os.path.join(directory, 'relevance.json'),
                           {'cases': cases}, **provenance)


def do_analyze(conf, run_config):
    args = conf.command
    directory = utils.ensure_dir(args.output_dir)
    provenance = {'checkpoint': conf.encoder.checkpoint,
                  'seed': run_config.seed,
                  'config_hash': run_config.config_hash}
    handlers = {'relevance': _analyze_relevance,
                'tsne': _analyze_tsne,
                'numbers': _analyze_numbers}
    handlers[args.what](conf, run_config, directory, provenance)


def _add_common(parser):
    parser.add_argument('--config', dest='run_config',
                        help=_('TOML or JSON run configuration file.'))
    parser.add_argument('--seed', type=int,
                        help=_('Master seed, overrides the configuration.'))
    parser.add_argument('--out', dest='out',
                        help=_('Output directory, overrides the '
                               'configuration.'))


def _add_labeled(parser):
    parser.add_argument('--input', required=True,
                        help=_('Series CSV file.'))
    parser.add_argument('--labels', required=True,
                        help=_('Labeled samples JSON-lines file.'))


def _scheme_argument(parser):
    parser.add_argument('--scheme', default=constants.SCHEME_STANDARD,
                        choices=constants.LABEL_SCHEMES)


def add_command_parsers(subparsers):
    parser = subparsers.add_parser('ingest', help=_('Validate an OHLC file.'))
    parser.add_argument('path', nargs='?',
                        help=_('OHLC file, same as --input.'))
    parser.add_argument('--input')
    parser.add_argument('--output',
                        help=_('Series CSV to write, series.csv under the '
                               'output directory (--out) by default.'))
    parser.add_argument('--format', default='csv', choices=('csv', 'jsonl'))
    parser.set_defaults(func=do_ingest)

    parser = subparsers.add_parser('synth',
                                   help=_('Generate a synthetic series.'))
    parser.add_argument('--output', required=True)
    parser.add_argument('--bars', type=int)
    parser.set_defaults(func=do_synth)

    parser = subparsers.add_parser('label', help=_('Label every anchor.'))
    parser.add_argument('--input', required=True)
    parser.add_argument('--output', required=True)
    _scheme_argument(parser)
    parser.set_defaults(func=do_label)

    parser = subparsers.add_parser('stats', help=_('Dataset statistics.'))
    parser.add_argument('--input', required=True)
    parser.add_argument('--output')
    parser.add_argument('--splits', action='store_true',
                        help=_('Statistics of each split.'))
    _scheme_argument(parser)
    parser.set_defaults(func=do_stats)

    parser = subparsers.add_parser('render', help=_('Render anchor charts.'))
    _add_labeled(parser)
    parser.add_argument('--output-dir', required=True)
    parser.set_defaults(func=do_render)

    parser = subparsers.add_parser('textify',
                                   help=_('Serialize bars as text.'))
    parser.add_argument('--input', required=True)
    parser.add_argument('--output', required=True)
    parser.set_defaults(func=do_textify)

    parser = subparsers.add_parser('embed', help=_('Embed model inputs.'))
    _add_labeled(parser)
    parser.add_argument('--model', required=True,
                        choices=catalog.MODEL_KINDS)
    parser.add_argument('--output', required=True)
    parser.add_argument('--normalizer',
                        help=_('Normalizer file; fitted on the input and '
                               'written there when missing.'))
    parser.set_defaults(func=do_embed)

    parser = subparsers.add_parser('train', help=_('Train one model.'))
    parser.add_argument('--model', required=True,
                        choices=catalog.MODEL_KINDS)
    parser.add_argument('--train', required=True)
    parser.add_argument('--validation', required=True)
    parser.add_argument('--test')
    parser.add_argument('--output', required=True)
    parser.add_argument('--label', default=constants.SCHEME_STANDARD,
                        choices=constants.LABEL_SCHEMES,
                        help=_('Label scheme the embedded arrays were '
                               'built with, recorded in the checkpoint.'))
    parser.add_argument('--predictions',
                        help=_('Write JSON-lines decisions for the test '
                               'embeddings (validation when no test file '
                               'is given).'))
    parser.set_defaults(func=do_train)

    parser = subparsers.add_parser('baseline',
                                   help=_('Reference strategy decisions.'))
    _add_labeled(parser)
    parser.add_argument('--strategy', required=True,
                        choices=constants.STRATEGIES)
    parser.add_argument('--output', required=True)
    parser.set_defaults(func=do_baseline)

    parser = subparsers.add_parser('eval', help=_('Score decisions.'))
    _add_labeled(parser)
    parser.add_argument('--predictions', required=True)
    parser.add_argument('--display-name',
                        help=_('Row name in the printed table.'))
    parser.add_argument('--output')
    _scheme_argument(parser)
    parser.set_defaults(func=do_eval)

    parser = subparsers.add_parser('search', help=_('Random grid search.'))
    parser.add_argument('--model', required=True,
                        choices=catalog.MODEL_KINDS)
    parser.add_argument('--trials', type=int)
    _scheme_argument(parser)
    parser.set_defaults(func=do_search)

    parser = subparsers.add_parser('report', help=_('Results table.'))
    parser.add_argument('--runs', required=True)
    parser.set_defaults(func=do_report)

    parser = subparsers.add_parser('analyze',
                                   help=_('Interpretability analyses.'))
    parser.add_argument('--what', required=True, choices=ANALYSES)
    parser.add_argument('--model',
                        help=_('Trained checkpoint directory.'))
    parser.add_argument('--model-kind', default=catalog.CLIP_IMAGE,
                        choices=catalog.MODEL_KINDS)
    parser.add_argument('--input')
    parser.add_argument('--labels')
    parser.add_argument('--embeddings')
    parser.add_argument('--count', type=int, default=3)
    parser.add_argument('--output-dir', required=True)
    parser.set_defaults(func=do_analyze)

    parser = subparsers.add_parser('run', help=_('Run the full pipeline.'))
    parser.set_defaults(func=do_run)

    for subparser in subparsers.choices.values():
        _add_common(subparser)


command_opt = cfg.SubCommandOpt('command',
                                title=_('Commands'),
                                handler=add_command_parsers,
                                help=_('Available commands'))


def setup_conf(argv, conf=None):
    conf = conf or cfg.CONF
    config.register_opts(conf)
    conf.register_cli_opt(command_opt)
    logging.register_options(conf)
    conf(argv, project='chartcast')
    return conf


def _overrides(args):
    overrides = {}
    if args.seed is not None:
        overrides[('DEFAULT', 'seed')] = args.seed
    if args.out:
        overrides[('DEFAULT', 'output_dir')] = args.out
    return overrides


def _check_analyze(args):
    needs = {'relevance': ('input', 'labels'), 'tsne': ('embeddings',),
             'numbers': ()}
    missing = [name for name in needs[args.what] if not getattr(args, name)]
    if missing:
        raise exceptions.ConfigError(
            reason=_('analyze --what %(what)s needs --%(args)s') % {
                'what': args.what, 'args': ', --'.join(missing)})


def main(argv=None, conf=None):
    """Entry point of the ``chartcast`` command.

    Returns the exit code of the failure class, 0 on success.
    """
    conf = setup_conf(sys.argv[1:] if argv is None else argv, conf)
    logging.setup(conf, 'chartcast')
    args = conf.command
    try:
        if args.name == 'analyze':
            _check_analyze(args)
        run_config = pipeline.validate_config(args.run_config, conf,
                                              overrides=_overrides(args))
        # Unseeded torch and random draws follow the master seed.
        utils.seed_everything(run_config.seed)
        args.func(conf, run_config)
    except exceptions.ChartcastException as e:
        LOG.error('%(name)s failed: %(error)s',
                  {'name': args.name, 'error': e})
        return e.exit_code
    return 0
