# standard library imports
import argparse
import json
import logging
import os
import sys
from typing import Optional
# third party imports
import numpy as np
import pandas as pd
# local imports
from sird_swarm import SirdSwarmError, __version__
from sird_swarm.calibration import (WindowScheme, Window, make_windows,
                                    fit_all_windows, fit_window,
                                    parameter_envelopes, compartment_envelopes,
                                    envelopes_frame, forecast_extension,
                                    stability_study, WindowOutOfRange)
from sird_swarm.config import (RunConfig, BOUND_CHOICES, ConfigError, load_config,
                               resolve_config)
from sird_swarm.model import r0, COMPARTMENTS, DegenerateRates
from sird_swarm.objectives import Metric, Family, ObjectiveSpec, all_specs
from sird_swarm.timeseries import read_csv, build_epi_series, load_epi_series, EpiSeries

"""Command-line entry point.

    sird-swarm preprocess --input data.csv
    sird-swarm fit --input data.csv --population 38000000
    sird-swarm compare --input data.csv --population 38000000
    sird-swarm forecast --input data.csv --population 38000000 --window-start 2021-04-04
    sird-swarm stability --input data.csv --population 38000000 --reps 1000

Every command writes plain CSV/JSON into --out-dir. Exit code 0 means every
window (or repetition) produced a result, 1 that some failed (see
errors.json), 2 that the run could not start or stopped on an error.
"""

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_PARTIAL, EXIT_ERROR = 0, 1, 2
OBJECTIVE_CHOICES = [s.name for s in all_specs()]
TABLE_ROWS = (('stage1', 'before preprocessing'), ('stage2', 'after preprocessing'))


def build_parser()->argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='sird-swarm',
        description='Window-wise SIRD calibration with particle swarm optimisation.')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    subparsers = parser.add_subparsers(dest='command', required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--input', help='CSV with date,confirmed,recovered,deaths')
    common.add_argument('--config', help='JSON run configuration file')
    common.add_argument('--out-dir', dest='out_dir', help='output directory')
    common.add_argument('--smooth', action='store_true', default=None,
                        help='fit the 7-day moving average instead of the raw series')
    common.add_argument('--verbose', action='store_true', help='debug logging')
    common.add_argument('--quiet', action='store_true', help='warnings only, no progress bars')

    run = argparse.ArgumentParser(add_help=False)
    run.add_argument('--population', type=float, help='population size N (required)')
    run.add_argument('--tau', type=int, help='window length in days (default 35)')
    run.add_argument('--delta', type=int, help='window shift in days (default 3)')
    run.add_argument('--objective', choices=OBJECTIVE_CHOICES, help='default ird-mxse')
    run.add_argument('--bounds', choices=BOUND_CHOICES, help='default stage2')
    run.add_argument('--particles', type=int, help='swarm size (default 10000)')
    run.add_argument('--iters', type=int, help='PSO iterations (default 100)')
    run.add_argument('--inertia', type=float)
    run.add_argument('--cognitive', type=float)
    run.add_argument('--social', type=float)
    run.add_argument('--seed', type=int)
    run.add_argument('--substeps', type=int, help='Euler steps per day (default 24)')
    run.add_argument('--threads', type=int, help='worker cap, results do not depend on it')

    window = argparse.ArgumentParser(add_help=False)
    window.add_argument('--window-start', dest='window_start',
                        help='first day of the window (YYYY-MM-DD)')
    window.add_argument('--window-index', dest='window_index', type=int,
                        help='window number in the tau/delta scheme')
    window.add_argument('--horizon', type=int, help='forecast days (default 21)')

    p = subparsers.add_parser('preprocess', parents=[common], help='clean the input series')
    p.add_argument('--output', help='cleaned CSV path (default <out-dir>/epi_series.csv)')
    p.set_defaults(func=cmd_preprocess)

    p = subparsers.add_parser('fit', parents=[common, run], help='fit every window')
    p.set_defaults(func=cmd_fit)

    p = subparsers.add_parser('compare', parents=[common, run],
                              help='mean R2(D) for every objective and both bound presets')
    p.set_defaults(func=cmd_compare)

    p = subparsers.add_parser('forecast', parents=[common, run, window],
                              help='fit one window and extend it')
    p.set_defaults(func=cmd_forecast)

    p = subparsers.add_parser('stability', parents=[common, run, window],
                              help='refit one window many times')
    p.add_argument('--reps', type=int, help='repetitions (default 1000)')
    p.set_defaults(func=cmd_stability)
    return parser


def setup_logging(verbose:bool=False, quiet:bool=False):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level,
                        format='%(asctime)s | %(levelname)s | %(name)s | %(message)s')


def run_config_from_args(args:argparse.Namespace)->RunConfig:
    file_values = load_config(args.config) if getattr(args, 'config', None) else None
    return resolve_config(file_values, vars(args))


def main(argv:Optional[list]=None)->int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose, args.quiet)
    config = None
    try:
        config = run_config_from_args(args)
        return args.func(args, config)
    except (SirdSwarmError, OSError) as e:
        out_dir = config.out_dir if config is not None else None
        report_error(e, out_dir)
        return EXIT_ERROR


def report_error(error:Exception, out_dir:Optional[str]=None):
    payload = {'error': type(error).__name__, 'message': str(error)}
    line = getattr(error, 'line', None)
    if line is not None:
        payload['line'] = line
    print(json.dumps(payload), file=sys.stderr)
    if out_dir and os.path.isdir(out_dir):
        write_json(os.path.join(out_dir, 'errors.json'), {'errors': [payload]})


def write_json(path:str, payload:dict):
    with open(path, 'w') as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write('\n')


def write_csv(path:str, frame:pd.DataFrame):
    frame.to_csv(path, index=False, na_rep='')


def prepare_out_dir(config:RunConfig)->str:
    os.makedirs(config.out_dir, exist_ok=True)
    return config.out_dir


def load_data(config:RunConfig)->EpiSeries:
    return load_epi_series(config.input, smooth=config.smooth)


def run_metadata(config:RunConfig, data:EpiSeries)->dict:
    """Settings that determine the results. The worker count does not and is
    not recorded.
    """
    return {'input_start_date': data.start_date.isoformat(),
            'n_days': len(data),
            'population': config.population,
            'seed': config.seed,
            'substeps': config.substeps,
            'smooth': bool(config.smooth),
            'pso': {'particles': config.particles, 'iters': config.iters,
                    'inertia': config.inertia, 'cognitive': config.cognitive,
                    'social': config.social}}


def cmd_preprocess(args:argparse.Namespace, config:RunConfig)->int:
    """Cleans the input and writes the EpiSeries CSV."""
    if not config.input:
        raise ConfigError('--input is required')
    if not os.path.isfile(config.input):
        raise ConfigError(f'input file {config.input!r} does not exist')
    raw = read_csv(config.input)
    epi = build_epi_series(raw)
    output = args.output or os.path.join(prepare_out_dir(config), 'epi_series.csv')
    if os.path.dirname(output):
        os.makedirs(os.path.dirname(output), exist_ok=True)
    epi.to_csv(output)
    report = epi.report
    print(f'Read {len(raw)} rows, wrote {len(epi)} daily rows to {output}')
    print(f'Interpolated cells: {report.n_interpolated}, '
          f'negative differences corrected: {report.n_negative_corrected}, '
          f'infectious days clamped: {report.n_clamped}')
    return EXIT_OK


def cmd_fit(args:argparse.Namespace, config:RunConfig)->int:
    """Fits every window and writes fits.json and the two envelope tables."""
    config.validate()
    data = load_data(config)
    scheme = WindowScheme.for_series(data, tau=config.tau, delta=config.delta)
    out_dir = prepare_out_dir(config)
    run = fit_all_windows(data, scheme, config.objective_spec(), config.param_bounds(),
                          config.pso_config(), config.population,
                          base_seed=config.seed, substeps=config.substeps,
                          n_jobs=config.threads, progress=not args.quiet)
    payload = run.to_dict(data)
    payload.update(run_metadata(config, data))
    write_json(os.path.join(out_dir, 'fits.json'), payload)
    write_csv(os.path.join(out_dir, 'envelopes_params.csv'),
              envelopes_frame(parameter_envelopes(run.fits, scheme), data, key='parameter'))
    write_csv(os.path.join(out_dir, 'envelopes_compartments.csv'),
              envelopes_frame(compartment_envelopes(run.fits, scheme), data, key='compartment'))
    mean = run.mean_r2_d
    print(f'Fitted {len(run.fits) - run.n_failed}/{len(run.fits)} windows, mean R2(D) = '
          + (f'{mean:.5f}' if mean is not None else 'n/a'))
    return finish(out_dir, [f.to_dict(data) for f in run.failures])


def finish(out_dir:str, failures:list)->int:
    if failures:
        write_json(os.path.join(out_dir, 'errors.json'), {'errors': failures})
        logger.warning('%d jobs failed, see %s', len(failures),
                       os.path.join(out_dir, 'errors.json'))
        return EXIT_PARTIAL
    return EXIT_OK


def comparison_table(means:dict)->pd.DataFrame:
    """Lays out mean R2(D) as rows (bounds stage, family) by metric columns.

    Args:
        means (dict): {(bounds name, ObjectiveSpec): mean or None}.
    """
    rows = []
    for bounds_name, label in TABLE_ROWS:
        for family, fitted in ((Family.D_ONLY, 'D'), (Family.IRD_JOINT, 'I, R, D')):
            row = {'procedure run': label, 'fitting to': fitted}
            for metric in Metric:
                value = means.get((bounds_name, ObjectiveSpec(family, metric)))
                row[metric.name] = 'failed' if value is None else round(value, 5)
            rows.append(row)
    return pd.DataFrame(rows)


def cmd_compare(args:argparse.Namespace, config:RunConfig)->int:
    """Runs every objective under both bound presets and writes the mean
    R2(D) table.
    """
    config.validate()
    data = load_data(config)
    scheme = WindowScheme.for_series(data, tau=config.tau, delta=config.delta)
    out_dir = prepare_out_dir(config)
    means, cells, failures = {}, [], []
    for bounds_name, _ in TABLE_ROWS:
        bounds = config.param_bounds(bounds_name)
        for spec in all_specs():
            run = fit_all_windows(data, scheme, spec, bounds, config.pso_config(),
                                  config.population, base_seed=config.seed,
                                  substeps=config.substeps, n_jobs=config.threads,
                                  progress=not args.quiet)
            means[(bounds_name, spec)] = run.mean_r2_d
            cells.append({'bounds': bounds_name, 'objective': spec.name,
                          'mean_r2_d': run.mean_r2_d, 'n_failed': run.n_failed,
                          'r2_d': [f.r2_d for f in run.fits]})
            failures += [dict(f.to_dict(data), bounds=bounds_name, objective=spec.name)
                         for f in run.failures]
    table = comparison_table(means)
    write_csv(os.path.join(out_dir, 'comparison.csv'), table)
    payload = {'cells': cells}
    payload.update(run_metadata(config, data))
    write_json(os.path.join(out_dir, 'comparison.json'), payload)
    print('Objective functions comparison - mean R2(D)')
    print(table.to_string(index=False))
    return finish(out_dir, failures)


def select_window(data:EpiSeries, config:RunConfig, window_start:Optional[str]=None,
                  window_index:Optional[int]=None)->Window:
    """The window to refit: by start date, by scheme index, or else the last
    window of the scheme.
    """
    scheme = WindowScheme.for_series(data, tau=config.tau, delta=config.delta)
    windows = make_windows(scheme)
    if window_start is not None:
        try:
            start = data.day_of(window_start)
        except ValueError:
            raise ConfigError(f'invalid --window-start {window_start!r}')
        if start < 0 or start + config.tau > data.T:
            raise WindowOutOfRange(f'window starting {window_start} needs days {start}..'
                                   f'{start + config.tau}, data covers 0..{data.T}')
        index = start // config.delta if start % config.delta == 0 else None
        return Window(index=index, start=start, end=start + config.tau)
    if window_index is not None:
        if not 0 <= window_index < len(windows):
            raise WindowOutOfRange(f'window index {window_index} outside 0..{len(windows) - 1}')
        return windows[window_index]
    return windows[-1]


def cmd_forecast(args:argparse.Namespace, config:RunConfig)->int:
    """Fits one window and writes the fitted days plus the extension next to
    the reports.
    """
    config.validate()
    data = load_data(config)
    window = select_window(data, config, args.window_start, args.window_index)
    out_dir = prepare_out_dir(config)
    fit = fit_window(data, window, config.objective_spec(), config.param_bounds(),
                     config.pso_config(), config.population, substeps=config.substeps,
                     n_jobs=config.threads, progress=not args.quiet)
    forecast = forecast_extension(fit, config.horizon, config.population)
    states = np.vstack([fit.trajectory.states, forecast.trajectory.states[1:]])
    days = np.arange(window.start, window.end + config.horizon + 1)
    frame = pd.DataFrame(states, columns=list(COMPARTMENTS))
    frame.insert(0, 'day', days)
    frame.insert(1, 'date', [data.date_of(d).isoformat() for d in days])
    frame.insert(2, 'phase', np.where(days <= window.end, 'fit', 'forecast'))
    reported = {'I': data.I, 'R': data.R_cum, 'D': data.D_cum}
    for name, values in reported.items():
        frame[f'reported_{name}'] = [values[d] if d <= data.T else np.nan for d in days]
    write_csv(os.path.join(out_dir, 'forecast.csv'), frame)
    try:
        junction_r0 = r0(forecast.beta2, forecast.gamma, forecast.mu)
    except DegenerateRates:
        junction_r0 = None
    summary = {'window': fit.to_dict(data), 'horizon': config.horizon,
               'objective': fit.spec.name, 'r0_junction': junction_r0}
    summary.update(run_metadata(config, data))
    write_json(os.path.join(out_dir, 'forecast.json'), summary)
    print(f'Window {data.date_of(window.start)}..{data.date_of(window.end)}: '
          f'R2(D) = {fit.r2_d}, forecast to {data.date_of(days[-1])}')
    return EXIT_OK


def stability_frame(result, data:EpiSeries)->pd.DataFrame:
    """One row per quantity and day; I, R and D rows also carry the reported
    value where the data reaches that day.
    """
    reported = {'I': data.I, 'R': data.R_cum, 'D': data.D_cum}
    frames = []
    for name, bands in result.bands.items():
        frame = bands.to_frame()
        frame.insert(0, 'quantity', name)
        frame.insert(2, 'date', [data.date_of(d).isoformat() for d in bands.days])
        frame.insert(3, 'phase', np.where(bands.days <= result.window.end, 'fit', 'extension'))
        values = reported.get(name)
        frame['reported'] = [values[d] if values is not None and d <= data.T else np.nan
                             for d in bands.days]
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def cmd_stability(args:argparse.Namespace, config:RunConfig)->int:
    """Refits one window config.reps times and writes the quantile bands."""
    config.validate()
    data = load_data(config)
    window = select_window(data, config, args.window_start, args.window_index)
    out_dir = prepare_out_dir(config)
    result = stability_study(data, window, config.objective_spec(), config.param_bounds(),
                             config.pso_config(), config.population, config.reps,
                             horizon=config.horizon, base_seed=config.seed,
                             substeps=config.substeps, n_jobs=config.threads,
                             progress=not args.quiet)
    write_csv(os.path.join(out_dir, 'stability_bands.csv'), stability_frame(result, data))
    summary = result.summary()
    summary['window']['start_date'] = data.date_of(window.start).isoformat()
    summary['window']['end_date'] = data.date_of(window.end).isoformat()
    summary['objective'] = config.objective_spec().name
    summary.update(run_metadata(config, data))
    write_json(os.path.join(out_dir, 'stability_summary.json'), summary)
    print(f'{len(result.forecasts)}/{config.reps} repetitions fitted, '
          f'{result.n_failed} excluded')
    return finish(out_dir, [f.to_dict(data) for f in result.fits if not f.ok])


if __name__ == '__main__':
    sys.exit(main())
