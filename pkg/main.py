import argparse
import logging
import sys
import typing as tp

import yaml

from config import GeneralConfig, IndexConfig, ValidationConfig, dump_config, load_config
from src import App
from src.models import MODEL_NAMES
from src.utils import EXIT_CODES, SubsidenceError
from src.utils.exceptions import InvalidConfig

logger = logging.getLogger('subsidence')


def _model_list(text: str) -> tp.List[str]:
    names = [name.strip() for name in text.split(',') if name.strip()]
    unknown = [name for name in names if name not in MODEL_NAMES]
    if unknown or not names:
        raise argparse.ArgumentTypeError(f"unknown model {unknown}, expected names from {', '.join(MODEL_NAMES)}")
    return names


def build_parser() -> argparse.ArgumentParser:
    formatter = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(description="Subsidence claim prediction pipeline", formatter_class=formatter)
    parser.add_argument('--config', help="YAML file overriding config.py constants")
    parser.add_argument('--workers', type=int, default=GeneralConfig.WORKERS, help="parallel workers")
    parser.add_argument('--seed', type=int, default=GeneralConfig.SEED)
    parser.add_argument('--log-level', default='INFO', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    commands = parser.add_subparsers(dest='command', required=True)

    indices = commands.add_parser('indices', help="extreme drought indices from monthly climate",
                                  formatter_class=formatter)
    indices.add_argument('climate')
    indices.add_argument('--output-dir')
    indices.add_argument('--geometry', help="town_id, cell_id, weight file for town aggregation")
    indices.add_argument('--clay', help="cell_id, clay file aggregated with the geometry")
    indices.add_argument('--reference-start', type=int, default=IndexConfig.REFERENCE_START)
    indices.add_argument('--reference-end', type=int, default=IndexConfig.REFERENCE_END)
    indices.add_argument('--min-positive', type=int, default=None)

    panel = commands.add_parser('build-panel', help="join inputs into the town-year panel", formatter_class=formatter)
    for name in ['exposure', 'claims', 'indices', 'clay', 'cat-history']:
        panel.add_argument(f"--{name}", required=True)
    panel.add_argument('--output-dir')

    fit = commands.add_parser('fit', help="fit one model", formatter_class=formatter)
    fit.add_argument('panel')
    fit.add_argument('--model', required=True, choices=MODEL_NAMES)
    fit.add_argument('--last-year', type=int)
    fit.add_argument('--scan-power', action='store_true', help="tweedie AIC over the power grid")
    fit.add_argument('--output-dir')

    predict = commands.add_parser('predict', help="predict one panel year", formatter_class=formatter)
    predict.add_argument('model')
    predict.add_argument('panel')
    predict.add_argument('--year', type=int, required=True)
    predict.add_argument('--severity', help="severity model file for compound costs")
    predict.add_argument('--output-dir')

    cv = commands.add_parser('cv', help="leave-future-out cross-validation", formatter_class=formatter)
    cv.add_argument('panel')
    cv.add_argument('--models', type=_model_list, default='poisson,negbin,zip,zinb')
    cv.add_argument('--first-test-year', type=int, default=ValidationConfig.FIRST_TEST_YEAR)
    cv.add_argument('--last-test-year', type=int, default=ValidationConfig.LAST_TEST_YEAR)
    cv.add_argument('--regions', help="town_id, region file for spatial folds")
    cv.add_argument('--k', type=int, default=ValidationConfig.SPATIAL_FOLDS)
    cv.add_argument('--evolution', choices=['poisson', 'binomial', 'negbin'], help="GLM coefficient evolution")
    cv.add_argument('--output-dir')

    synth = commands.add_parser('synth', help="synthetic panel with known truth", formatter_class=formatter)
    synth.add_argument('--n-towns', type=int)
    synth.add_argument('--first-year', type=int)
    synth.add_argument('--last-year', type=int)
    synth.add_argument('--family', choices=['poisson', 'binomial', 'negbin', 'zip', 'zinb'])
    synth.add_argument('--output-dir')

    map_ = commands.add_parser('map', help="(town_id, value) exports of a prediction file", formatter_class=formatter)
    map_.add_argument('predictions')
    map_.add_argument('--value', help="column to export")
    map_.add_argument('--output-dir')

    report = commands.add_parser('report', help="rank the models of a cv directory", formatter_class=formatter)
    report.add_argument('cv_dir')
    report.add_argument('--panel', help="panel for the cost method comparison")
    report.add_argument('--cost-year', type=int)
    report.add_argument('--output-dir')

    commands.add_parser('config', help="print the effective configuration")
    return parser


def run(args: argparse.Namespace):
    app = App(workers=args.workers, seed=args.seed, config_path=args.config)
    if args.command == 'indices':
        reference = None
        if args.reference_start is not None or args.reference_end is not None:
            reference = (args.reference_start, args.reference_end)
        app.cmd_indices(args.climate, args.output_dir, reference, args.geometry, args.clay, args.min_positive)
    elif args.command == 'build-panel':
        app.cmd_build_panel(args.exposure, args.claims, args.indices, args.clay, args.cat_history, args.output_dir)
    elif args.command == 'fit':
        app.cmd_fit(args.panel, args.model, args.output_dir, args.last_year, args.scan_power)
    elif args.command == 'predict':
        app.cmd_predict(args.model, args.panel, args.year, args.output_dir, args.severity)
    elif args.command == 'cv':
        app.cmd_cv(args.panel, args.models, args.output_dir, args.first_test_year, args.last_test_year, args.regions,
                   args.k, args.evolution)
    elif args.command == 'synth':
        app.cmd_synth(args.output_dir, n_towns=args.n_towns, first_year=args.first_year, last_year=args.last_year,
                      family=args.family)
    elif args.command == 'map':
        app.cmd_map(args.predictions, args.output_dir, args.value)
    elif args.command == 'report':
        app.cmd_report(args.cv_dir, args.output_dir, args.panel, args.cost_year)
    elif args.command == 'config':
        print(yaml.safe_dump(dump_config(), sort_keys=False), end='')


def _report(error: SubsidenceError) -> int:
    print(f"error category={error.category} type={type(error).__name__} message={error}", file=sys.stderr)
    return EXIT_CODES.get(error.category, 1)


def main(argv: tp.Sequence[str] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    # the config file is applied first so that flag defaults and --help show its values
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument('--config')
    known, _ = pre.parse_known_args(argv)
    try:
        if known.config:
            load_config(known.config)
    except (OSError, yaml.YAMLError) as e:
        return _report(InvalidConfig(f"Cannot read config file: {e}"))
    except SubsidenceError as e:
        return _report(e)

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        GeneralConfig.SEED = args.seed
        GeneralConfig.WORKERS = args.workers
        run(args)
    except SubsidenceError as e:
        return _report(e)
    except Exception:
        logger.exception(f"Command {args.command} failed")
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
