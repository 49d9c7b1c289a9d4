"""
Command-line interface.

.. sourcecode:: text

    fatformer generate --config udiva.cfg --out data/
    fatformer train --preset mpigi --seed 3 --out runs/mpigi
    fatformer ablate --rows full,wo_forced --seeds 3 --out runs/ablation
    fatformer eval --checkpoint runs/mpigi/best.ckpt
    fatformer export-attention --checkpoint runs/udiva/best.ckpt --out maps/ --png
    fatformer grad-check

Exit codes: 0 on success, 2 for configuration and usage errors, 3 for data errors, 4 for numeric
failures (including a failed gradient suite) and 1 for anything else the library reports.
"""
import argparse
import logging
import os
import sys
from typing import (  # noqa pylint: disable=unused-import
    List,
    Optional,
)

from .checkpoint import read_checkpoint
from .config import (
    PRESETS,
    ExperimentConfig,
    default_experiment_config,
    load_experiment,
    parse_experiment,
    preset,
    with_overrides,
)
from .data import export_dataset
from .errors import ConfigError, DataError, FatError, NumericError
from .gradcheck import check_names, failed, run_checks
from .harness import (
    ABLATION_ROWS,
    best_report,
    dataset_for,
    evaluate,
    export_attention,
    parse_rows,
    run_ablation,
    train,
    validation_sample,
)
from .metrics import format_report


_logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def build_parser():
    # type: () -> argparse.ArgumentParser
    """Declare the commands and their flags."""
    verbosity = argparse.ArgumentParser(add_help=False)
    group = verbosity.add_mutually_exclusive_group()
    group.add_argument('-v', '--verbose', action='store_true', help='log progress details')
    group.add_argument('-q', '--quiet', action='store_true', help='log warnings only')

    experiment = argparse.ArgumentParser(add_help=False)
    experiment.add_argument('--config', help='experiment file')
    experiment.add_argument('--preset', choices=sorted(PRESETS),
                            help='task preset, used when no experiment file is given')
    experiment.add_argument('--seed', type=int, help='override the experiment seed')
    experiment.add_argument('--out', help='override the output directory')
    experiment.add_argument('--forced-variant', help='override the forced variant (off, a-e)')
    experiment.add_argument('--seg-per-frame', action='store_const', const=True,
                            help='chunk segmentation maps per frame instead of per clip')

    parser = argparse.ArgumentParser(
        prog='fatformer', parents=[verbosity],
        description='Train and analyse video transformers with segmentation-forced attention.')
    commands = parser.add_subparsers(dest='command', metavar='command')
    commands.required = True

    commands.add_parser('generate', parents=[verbosity, experiment],
                        help='write the synthetic dataset of an experiment')
    commands.add_parser('train', parents=[verbosity, experiment], help='train one model')

    ablate = commands.add_parser('ablate', parents=[verbosity, experiment],
                                 help='train the rows of the ablation table')
    ablate.add_argument('--rows', default=','.join(ABLATION_ROWS),
                        help='comma-separated rows (default: all of {})'.format(
                            ', '.join(ABLATION_ROWS)))
    ablate.add_argument('--seeds', type=int, help='runs per row')

    evaluate_parser = commands.add_parser('eval', parents=[verbosity],
                                          help='score a checkpoint on its validation data')
    evaluate_parser.add_argument('--checkpoint', required=True)
    evaluate_parser.add_argument('--out', help='directory for metrics.csv')

    export = commands.add_parser('export-attention', parents=[verbosity],
                                 help='write attention heatmaps of a checkpoint')
    export.add_argument('--checkpoint', required=True)
    export.add_argument('--sample', type=int, default=0, help='validation sample index')
    export.add_argument('--out', required=True)
    export.add_argument('--png', action='store_true', help='also render PNG images')

    grad = commands.add_parser('grad-check', parents=[verbosity],
                               help='run the finite-difference gradient suite')
    grad.add_argument('--check', action='append', choices=check_names(),
                      help='run only this check (repeatable)')
    grad.add_argument('--seeds', type=int, default=20, help='random instances per check')

    return parser


def experiment_from_args(args):
    # type: (argparse.Namespace) -> ExperimentConfig
    """Load the experiment named by the flags and apply the overrides."""
    if args.config:
        cfg = load_experiment(args.config)
    elif args.preset:
        cfg = preset(args.preset)
    else:
        cfg = default_experiment_config()
    return with_overrides(cfg, seed=args.seed, directory=args.out,
                          forced_variant=args.forced_variant, seg_per_frame=args.seg_per_frame)


def _generate(args):
    # type: (argparse.Namespace) -> int
    cfg = experiment_from_args(args)
    export_dataset(dataset_for(cfg), cfg.outputs.directory)
    print('Wrote {} samples to {}'.format(cfg.data.samples, cfg.outputs.directory))
    return EXIT_OK


def _train(args):
    # type: (argparse.Namespace) -> int
    cfg = experiment_from_args(args)
    record = train(cfg, out_dir=cfg.outputs.directory)
    print('Best epoch {} of {}; checkpoint {}'.format(
        record.best_epoch, len(record.train_loss), record.checkpoint))
    print(format_report(best_report(record)))
    return EXIT_OK


def _ablate(args):
    # type: (argparse.Namespace) -> int
    cfg = experiment_from_args(args)
    result = run_ablation(cfg, parse_rows(args.rows), args.seeds, cfg.outputs.directory)
    print(result.table.to_string(index=False))
    return EXIT_OK


def _eval(args):
    # type: (argparse.Namespace) -> int
    print(format_report(evaluate(args.checkpoint, args.out)))
    return EXIT_OK


def _export_attention(args):
    # type: (argparse.Namespace) -> int
    cfg = parse_experiment(read_checkpoint(args.checkpoint).config_text)
    paths = export_attention(args.checkpoint, validation_sample(cfg, args.sample), args.out,
                             png=args.png)
    print('Wrote {} files to {}'.format(len(paths), os.path.abspath(args.out)))
    return EXIT_OK


def _grad_check(args):
    # type: (argparse.Namespace) -> int
    results = run_checks(args.check, seeds=args.seeds)
    for result in results:
        print('{:<24} {:.3e} / {:.0e} {}'.format(
            result.name, result.max_error, result.tolerance, 'ok' if result.passed else 'FAILED'))
    return EXIT_NUMERIC if failed(results) else EXIT_OK


_COMMANDS = {
    'generate': _generate,
    'train': _train,
    'ablate': _ablate,
    'eval': _eval,
    'export-attention': _export_attention,
    'grad-check': _grad_check,
}


def main(argv=None):
    # type: (Optional[List[str]]) -> int
    """Run a command and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_request:
        return int(exit_request.code or 0)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')

    try:
        return _COMMANDS[args.command](args)
    except ConfigError as error:
        _logger.error('Configuration error: %s', error)
        return EXIT_CONFIG
    except DataError as error:
        _logger.error('Data error: %s', error)
        return EXIT_DATA
    except NumericError as error:
        _logger.error('Numeric failure: %s', error)
        return EXIT_NUMERIC
    except FatError as error:
        _logger.error('%s', error)
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
