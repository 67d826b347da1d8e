# standard library imports
from dataclasses import dataclass, field, replace
import logging
from typing import Optional
# third party imports
import numpy as np
import pandas as pd
from tqdm import tqdm
# local imports
from sird_swarm import SirdSwarmError
from sird_swarm.model import (SirdParams, SirdState, Trajectory, PARAM_NAMES,
                              COMPARTMENTS, DEFAULT_SUBSTEPS, simulate_batch,
                              integrate_euler, beta_profile, run_chunked,
                              resolve_jobs, NonFinite)
from sird_swarm.objectives import (ObjectiveSpec, objective_rows,
                                   objective_value, r_squared_d,
                                   ConstantObserved)
from sird_swarm.pso import PsoConfig, SearchBounds, optimize
from sird_swarm.timeseries import EpiSeries

"""Window-wise calibration of the SIRD model and everything built on top of
it.

pipeline:
EpiSeries -> make_windows -> fit_window (PSO over beta1, beta2, t1, t2,
gamma, mu) per window -> parameter/compartment envelopes across overlapping
windows.
A single window can also be refitted many times with different seeds
(stability_study) and extended past its last day with beta2, gamma, mu held
constant (forecast_extension) to get quantile bands for a short forecast.
"""

logger = logging.getLogger(__name__)

DEFAULT_TAU = 35
DEFAULT_DELTA = 3
DEFAULT_HORIZON = 21
ENVELOPE_PARAMETERS = ('beta', 'gamma', 'mu', 'r0')
ENVELOPE_COMPARTMENTS = COMPARTMENTS
QUANTILE_LEVELS = (50, 90, 95)


@dataclass(frozen=True)
class Window:
    """Days start..end inclusive of the data. index is the position in the
    window scheme, None for a window that is not on the delta grid.
    """
    index: Optional[int]
    start: int
    end: int

    @property
    def n_days(self)->int:
        return self.end - self.start + 1

    def covers(self, day:int)->bool:
        return self.start <= day <= self.end


@dataclass(frozen=True)
class WindowScheme:
    """T is the index of the last data day, tau the window length and delta
    the shift between consecutive window starts.
    """
    T: int
    tau: int = DEFAULT_TAU
    delta: int = DEFAULT_DELTA

    def __post_init__(self):
        if self.tau < 1 or self.delta < 1:
            raise SchemeInvalid(f'tau and delta must be >= 1 (tau={self.tau}, '
                                f'delta={self.delta})')
        if self.T < self.tau:
            raise SchemeInvalid(f'data ends at day {self.T}, shorter than tau={self.tau}')

    @property
    def n_windows(self)->int:
        return (self.T - self.tau) // self.delta + 1

    @classmethod
    def for_series(cls, data:EpiSeries, tau:int=DEFAULT_TAU,
                   delta:int=DEFAULT_DELTA)->'WindowScheme':
        return cls(T=data.T, tau=tau, delta=delta)


def make_windows(scheme:WindowScheme)->list[Window]:
    """floor(1 + (T - tau)/delta) windows, window i starting at i*delta and
    holding tau + 1 daily observations.
    """
    return [Window(index=i, start=i * scheme.delta, end=i * scheme.delta + scheme.tau)
            for i in range(scheme.n_windows)]


@dataclass(frozen=True)
class ParamBounds:
    """Search ranges for the rates and the t-bound rule
    start <= t1 <= t2 <= end - t_margin.
    """
    beta1: tuple = (0.0, 10.0)
    beta2: tuple = (0.0, 10.0)
    gamma: tuple = (0.0, 10.0)
    mu: tuple = (0.0, 10.0)
    t_margin: int = 0
    name: str = 'custom'

    def __post_init__(self):
        for key in ('beta1', 'beta2', 'gamma', 'mu'):
            lo, hi = getattr(self, key)
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo < 0 or lo > hi:
                raise ValueError(f'invalid bounds for {key}: {(lo, hi)}')
        if self.t_margin < 0:
            raise ValueError('t_margin must be >= 0')

    @classmethod
    def stage1(cls)->'ParamBounds':
        return cls(name='stage1')

    @classmethod
    def stage2(cls)->'ParamBounds':
        return cls(beta1=(0.0, 2.0), beta2=(0.0, 2.0), gamma=(0.0, 1.0),
                   mu=(0.0, 0.1), t_margin=7, name='stage2')

    @classmethod
    def from_dict(cls, values:dict)->'ParamBounds':
        """Builds custom bounds from {'beta1': [lo, hi], ..., 't_margin': k}."""
        kwargs = {key: tuple(float(v) for v in values[key])
                  for key in ('beta1', 'beta2', 'gamma', 'mu') if key in values}
        if 't_margin' in values:
            kwargs['t_margin'] = int(values['t_margin'])
        return cls(name='custom', **kwargs)

    @classmethod
    def preset(cls, name:str)->'ParamBounds':
        presets = {'stage1': cls.stage1, 'stage2': cls.stage2}
        if name not in presets:
            raise ValueError(f'unknown bounds preset {name!r}')
        return presets[name]()

    def search_bounds(self, window:Window)->SearchBounds:
        t_hi = window.end - self.t_margin
        if t_hi < window.start:
            raise SchemeInvalid(f'window of {window.n_days} days is too short for '
                                f't_margin={self.t_margin}')
        lower = [self.beta1[0], self.beta2[0], window.start, window.start,
                 self.gamma[0], self.mu[0]]
        upper = [self.beta1[1], self.beta2[1], t_hi, t_hi,
                 self.gamma[1], self.mu[1]]
        return SearchBounds(lower=np.array(lower, dtype=float),
                            upper=np.array(upper, dtype=float))

    def contains(self, params:SirdParams, window:Window)->bool:
        box = self.search_bounds(window)
        return box.contains(params.to_array()) and params.t1 <= params.t2

    def to_dict(self)->dict:
        return {'name': self.name, 'beta1': list(self.beta1), 'beta2': list(self.beta2),
                'gamma': list(self.gamma), 'mu': list(self.mu), 't_margin': self.t_margin}


T1, T2 = PARAM_NAMES.index('t1'), PARAM_NAMES.index('t2')


def repair_t_order(positions:np.ndarray)->np.ndarray:
    """Swaps t1 and t2 on every row where t1 > t2. Both share one range, so
    the swapped rows stay inside the box.
    """
    positions = positions.copy()
    swap = positions[:, T1] > positions[:, T2]
    positions[swap, T1], positions[swap, T2] = positions[swap, T2], positions[swap, T1]
    return positions


def _score_chunk(positions, spec, observed, init, N, n_days, substeps, t0):
    states = simulate_batch(positions, init, N, n_days, substeps=substeps, t0=t0)
    return objective_rows(spec, observed, states)


@dataclass
class SwarmObjective:
    """Batch objective handed to the swarm: integrates every particle over
    the window and scores it. Rows are split across n_jobs worker processes;
    the costs do not depend on the split.
    """
    spec: ObjectiveSpec
    observed: dict
    init: SirdState
    N: float
    n_days: int
    t0: float
    substeps: int = DEFAULT_SUBSTEPS
    n_jobs: int = 1

    def __call__(self, positions:np.ndarray)->np.ndarray:
        return run_chunked(_score_chunk, positions, self.n_jobs, self.spec,
                           self.observed, self.init, self.N, self.n_days,
                           self.substeps, self.t0)


@dataclass
class FitResult:
    """Outcome of fitting one window. A failed fit keeps params, values and
    trajectory at None and records the error.
    """
    window: Window
    spec: ObjectiveSpec
    params: Optional[SirdParams] = None
    objective_value: Optional[float] = None
    r2_d: Optional[float] = None
    trajectory: Optional[Trajectory] = None
    seed: Optional[int] = None
    substeps: int = DEFAULT_SUBSTEPS
    error: Optional[str] = None

    @property
    def ok(self)->bool:
        return self.params is not None

    def to_dict(self, data:Optional[EpiSeries]=None)->dict:
        out = {'index': self.window.index,
               'start_day': self.window.start,
               'end_day': self.window.end,
               'seed': self.seed,
               'params': self.params.to_dict() if self.ok else None,
               'objective_value': _json_float(self.objective_value),
               'r2_d': _json_float(self.r2_d),
               'error': self.error}
        if data is not None:
            out['start_date'] = data.date_of(self.window.start).isoformat()
            out['end_date'] = data.date_of(self.window.end).isoformat()
        return out


def _json_float(value):
    if value is None or not np.isfinite(value):
        return None
    return float(value)


def job_seed(base_seed:int, index:int)->int:
    """64-bit seed of job `index` derived from the base seed."""
    sequence = np.random.SeedSequence([int(base_seed) & ((1 << 64) - 1), int(index)])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def initial_state(data:EpiSeries, window:Window, N:float)->SirdState:
    """Reported I, R, D on the first window day, the rest susceptible."""
    I0, R0, D0 = data.I[window.start], data.R_cum[window.start], data.D_cum[window.start]
    S0 = N - I0 - R0 - D0
    if S0 < 0:
        raise InsufficientPopulation(f'population {N:g} is smaller than I+R+D='
                                     f'{I0 + R0 + D0:g} on day {window.start}')
    return SirdState(S=float(S0), I=float(I0), R=float(R0), D=float(D0))


def fit_window(data:EpiSeries,
               window:Window,
               spec:ObjectiveSpec,
               bounds:ParamBounds,
               pso_config:PsoConfig,
               N:float,
               substeps:int=DEFAULT_SUBSTEPS,
               n_jobs:Optional[int]=1,
               progress:bool=False)->FitResult:
    """Finds the parameters minimising the objective on one window.

    Args:
        data (EpiSeries): the cleaned reports.
        window (Window): which days to fit.
        spec (ObjectiveSpec): objective function.
        bounds (ParamBounds): search ranges (stage1, stage2 or custom).
        pso_config (PsoConfig): swarm settings; its seed is used as is.
        N (float): population.
        substeps (int, optional): Euler steps per day. Defaults to 24.
        n_jobs (int, optional): worker processes for the batch evaluation.
        progress (bool, optional): tqdm bar over PSO iterations.

    Raises:
        WindowOutOfRange: if the window is not inside the data.
        InsufficientPopulation: if N cannot hold the reported I+R+D.
        AllInfeasible: if every particle diverged.

    Returns:
        FitResult: with the trajectory over the window and R^2(D).
    """
    if window.start < 0 or window.end > data.T:
        raise WindowOutOfRange(f'window {window.start}..{window.end} outside data '
                               f'days 0..{data.T}')
    observed = data.window(window.start, window.end)
    init = initial_state(data, window, N)
    evaluate = SwarmObjective(spec=spec, observed=observed, init=init, N=float(N),
                              n_days=window.n_days, t0=float(window.start),
                              substeps=substeps, n_jobs=resolve_jobs(n_jobs))
    result = optimize(pso_config, bounds.search_bounds(window), evaluate,
                      constraint_repair=repair_t_order, progress=progress)
    params = SirdParams.from_array(result.best_position)
    trajectory = integrate_euler(params, init, N, window.n_days, substeps=substeps,
                                 t0=window.start)
    try:
        r2 = r_squared_d(observed['D'], trajectory.D)
    except ConstantObserved:
        r2 = None
    return FitResult(window=window, spec=spec, params=params,
                     objective_value=objective_value(spec, observed, trajectory),
                     r2_d=r2, trajectory=trajectory, seed=pso_config.seed,
                     substeps=substeps)


@dataclass
class WindowFits:
    """Results of fitting every window of a scheme."""
    scheme: WindowScheme
    spec: ObjectiveSpec
    bounds: ParamBounds
    fits: list = field(default_factory=list)

    @property
    def failures(self)->list:
        return [f for f in self.fits if not f.ok]

    @property
    def n_failed(self)->int:
        return len(self.failures)

    @property
    def mean_r2_d(self)->Optional[float]:
        """Mean R^2(D) over the windows that were fitted and have a defined
        score.
        """
        scores = [f.r2_d for f in self.fits if f.ok and f.r2_d is not None]
        if not scores:
            return None
        return float(np.mean(scores))

    def to_dict(self, data:Optional[EpiSeries]=None)->dict:
        return {'objective': self.spec.name,
                'bounds': self.bounds.to_dict(),
                'T': self.scheme.T,
                'tau': self.scheme.tau,
                'delta': self.scheme.delta,
                'n_windows': len(self.fits),
                'n_failed': self.n_failed,
                'mean_r2_d': _json_float(self.mean_r2_d),
                'windows': [f.to_dict(data) for f in self.fits]}


def fit_all_windows(data:EpiSeries,
                    scheme:WindowScheme,
                    spec:ObjectiveSpec,
                    bounds:ParamBounds,
                    pso_config:PsoConfig,
                    N:float,
                    base_seed:Optional[int]=None,
                    substeps:int=DEFAULT_SUBSTEPS,
                    n_jobs:Optional[int]=1,
                    progress:bool=False)->WindowFits:
    """Fits every window of the scheme. Window i runs with seed
    job_seed(base_seed, i); a window that fails is recorded, not raised.
    """
    if base_seed is None:
        base_seed = pso_config.seed
    run = WindowFits(scheme=scheme, spec=spec, bounds=bounds)
    windows = make_windows(scheme)
    logger.info('Fitting %d windows with %s (%s bounds)', len(windows), spec, bounds.name)
    for window in tqdm(windows, desc=f'{spec} {bounds.name}', disable=not progress):
        seed = job_seed(base_seed, window.index)
        try:
            fit = fit_window(data, window, spec, bounds, replace(pso_config, seed=seed),
                             N, substeps=substeps, n_jobs=n_jobs)
        except SirdSwarmError as e:
            logger.warning('window %d failed: %s: %s', window.index, type(e).__name__, e)
            fit = FitResult(window=window, spec=spec, seed=seed, substeps=substeps,
                            error=f'{type(e).__name__}: {e}')
        run.fits.append(fit)
    if run.mean_r2_d is not None:
        logger.info('mean R2(D) over %d windows: %.5f', len(windows) - run.n_failed,
                    run.mean_r2_d)
    return run


@dataclass
class Envelope:
    """Per-day spread of values contributed by every window covering a day.

    band1 drops the smallest and largest value (needs 3 samples, otherwise
    equals the outer band); band2 drops the two smallest and two largest
    (needs 5 samples, NaN otherwise). With a single sample every band
    collapses onto it.
    """
    days: np.ndarray
    n_samples: np.ndarray
    outer_min: np.ndarray
    outer_max: np.ndarray
    band1_min: np.ndarray
    band1_max: np.ndarray
    band2_min: np.ndarray
    band2_max: np.ndarray
    median: np.ndarray

    @classmethod
    def from_samples(cls, days, samples:list)->'Envelope':
        n_days = len(samples)
        cols = {k: np.full(n_days, np.nan) for k in
                ('outer_min', 'outer_max', 'band1_min', 'band1_max',
                 'band2_min', 'band2_max', 'median')}
        counts = np.zeros(n_days, dtype=int)
        for k, values in enumerate(samples):
            v = np.sort(np.asarray(values, dtype=float))
            n = len(v)
            counts[k] = n
            if n == 0:
                continue
            cols['outer_min'][k], cols['outer_max'][k] = v[0], v[-1]
            cols['median'][k] = np.median(v)
            if n >= 3:
                cols['band1_min'][k], cols['band1_max'][k] = v[1], v[-2]
            else:
                cols['band1_min'][k], cols['band1_max'][k] = v[0], v[-1]
            if n >= 5:
                cols['band2_min'][k], cols['band2_max'][k] = v[2], v[-3]
            elif n == 1:
                cols['band2_min'][k], cols['band2_max'][k] = v[0], v[0]
        return cls(days=np.asarray(days), n_samples=counts, **cols)

    def is_nested(self)->bool:
        """outer contains band1 contains band2 and the median sits inside the
        innermost defined band, on every day with samples.
        """
        has = self.n_samples > 0
        ok = (self.outer_min[has] <= self.band1_min[has]) \
            & (self.band1_max[has] <= self.outer_max[has]) \
            & (self.band1_min[has] <= self.median[has]) \
            & (self.median[has] <= self.band1_max[has])
        two = ~np.isnan(self.band2_min)
        ok2 = (self.band1_min[two] <= self.band2_min[two]) \
            & (self.band2_max[two] <= self.band1_max[two]) \
            & (self.band2_min[two] <= self.median[two]) \
            & (self.median[two] <= self.band2_max[two])
        return bool(np.all(ok) and np.all(ok2))

    def to_frame(self)->pd.DataFrame:
        return pd.DataFrame({'day': self.days, 'n': self.n_samples,
                             'outer_min': self.outer_min, 'outer_max': self.outer_max,
                             'band1_min': self.band1_min, 'band1_max': self.band1_max,
                             'band2_min': self.band2_min, 'band2_max': self.band2_max,
                             'median': self.median})


def _fitted(fits:list)->list:
    return sorted((f for f in fits if f.ok), key=lambda f: f.window.index)


def parameter_envelopes(fits:list, scheme:WindowScheme)->dict[str, Envelope]:
    """Per-day envelopes of beta(t), gamma, mu and R0(t) = beta(t)/(gamma+mu)
    over the windows covering each day. Windows with gamma + mu = 0 give no
    R0 sample.
    """
    days = np.arange(scheme.T + 1)
    samples = {name: [[] for _ in days] for name in ENVELOPE_PARAMETERS}
    for fit in _fitted(fits):
        p = fit.params
        covered = np.arange(fit.window.start, fit.window.end + 1)
        beta = beta_profile(p.beta1, p.beta2, p.t1, p.t2, covered.astype(float))
        removal = p.gamma + p.mu
        for d, b in zip(covered, beta):
            samples['beta'][d].append(b)
            samples['gamma'][d].append(p.gamma)
            samples['mu'][d].append(p.mu)
            if removal > 0:
                samples['r0'][d].append(b / removal)
    return {name: Envelope.from_samples(days, samples[name]) for name in ENVELOPE_PARAMETERS}


def compartment_envelopes(fits:list, scheme:WindowScheme)->dict[str, Envelope]:
    """Per-day envelopes of the fitted S, I, R, D trajectories."""
    days = np.arange(scheme.T + 1)
    samples = {name: [[] for _ in days] for name in ENVELOPE_COMPARTMENTS}
    for fit in _fitted(fits):
        for k, name in enumerate(ENVELOPE_COMPARTMENTS):
            for offset, value in enumerate(fit.trajectory.states[:, k]):
                samples[name][fit.window.start + offset].append(value)
    return {name: Envelope.from_samples(days, samples[name]) for name in ENVELOPE_COMPARTMENTS}


def envelopes_frame(envelopes:dict[str, Envelope], data:Optional[EpiSeries]=None,
                    key:str='parameter')->pd.DataFrame:
    """Stacks envelopes into one long table with a date column and, for
    compartments, the reported value of that day.
    """
    frames = []
    reported = {}
    if data is not None:
        reported = {'I': data.I, 'R': data.R_cum, 'D': data.D_cum}
    for name, env in envelopes.items():
        frame = env.to_frame()
        frame.insert(0, key, name)
        if data is not None:
            frame.insert(2, 'date', [data.date_of(d).isoformat() for d in env.days])
            if key == 'compartment':
                values = reported.get(name)
                frame['reported'] = values[env.days] if values is not None else np.nan
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


@dataclass
class Forecast:
    """Continuation of a fitted window. Day 0 is the last fitted day."""
    horizon: int
    trajectory: Trajectory
    beta2: float
    gamma: float
    mu: float
    start_day: int


def forecast_extension(fit:FitResult, horizon:int=DEFAULT_HORIZON,
                       N:Optional[float]=None)->Forecast:
    """Integrates `horizon` more days from the last fitted state with beta
    held at beta2 and the fitted gamma and mu.

    Raises:
        NonFinite: if the fitted trajectory or the extension is non-finite
            or negative.
    """
    if horizon < 1:
        raise ValueError('horizon must be >= 1')
    if not fit.ok:
        raise ValueError(f'window {fit.window.index} has no fitted parameters')
    if not fit.trajectory.valid:
        raise NonFinite(f'window {fit.window.index} ends in an invalid state')
    p = fit.params
    if N is None:
        N = fit.trajectory.population
    start = fit.window.end
    constant = SirdParams(beta1=p.beta2, beta2=p.beta2, t1=float(start), t2=float(start),
                          gamma=p.gamma, mu=p.mu)
    trajectory = integrate_euler(constant, fit.trajectory.last_state(), N, horizon + 1,
                                 substeps=fit.substeps, t0=start)
    return Forecast(horizon=horizon, trajectory=trajectory, beta2=p.beta2,
                    gamma=p.gamma, mu=p.mu, start_day=start)


@dataclass
class QuantileBands:
    """Per-day central bands holding 50%, 90% and 95% of the samples around
    the median.
    """
    days: np.ndarray
    n_samples: int
    median: np.ndarray
    lo50: np.ndarray
    hi50: np.ndarray
    lo90: np.ndarray
    hi90: np.ndarray
    lo95: np.ndarray
    hi95: np.ndarray

    @classmethod
    def from_samples(cls, days, samples)->'QuantileBands':
        """samples has shape (n_samples, n_days)."""
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        probs = [0.5, 0.25, 0.75, 0.05, 0.95, 0.025, 0.975]
        q = np.quantile(samples, probs, axis=0)
        return cls(np.asarray(days), samples.shape[0], *q)

    def is_nested(self)->bool:
        return bool(np.all(self.lo95 <= self.lo90) and np.all(self.lo90 <= self.lo50)
                    and np.all(self.lo50 <= self.median) and np.all(self.median <= self.hi50)
                    and np.all(self.hi50 <= self.hi90) and np.all(self.hi90 <= self.hi95))

    def contains(self, values, level:int=95)->np.ndarray:
        lo, hi = getattr(self, f'lo{level}'), getattr(self, f'hi{level}')
        values = np.asarray(values, dtype=float)
        return (lo <= values) & (values <= hi)

    def to_frame(self)->pd.DataFrame:
        return pd.DataFrame({'day': self.days, 'median': self.median,
                             'lo50': self.lo50, 'hi50': self.hi50,
                             'lo90': self.lo90, 'hi90': self.hi90,
                             'lo95': self.lo95, 'hi95': self.hi95})


def distribution_summary(values)->dict:
    values = np.asarray(values, dtype=float)
    bands = QuantileBands.from_samples([0], values[:, None])
    return {'n': int(len(values)), 'mean': float(values.mean()),
            'std': float(values.std()), 'min': float(values.min()),
            'max': float(values.max()), 'median': float(bands.median[0]),
            'band50': [float(bands.lo50[0]), float(bands.hi50[0])],
            'band90': [float(bands.lo90[0]), float(bands.hi90[0])],
            'band95': [float(bands.lo95[0]), float(bands.hi95[0])]}


@dataclass
class StabilityResult:
    """Repeated fits of one window.

    Attributes:
        window (Window) : the refitted window.
        horizon (int) : forecast length in days.
        bands (dict[str, QuantileBands]) : 'beta' and 'r0' over the window
            days, 'gamma' and 'mu' as single-day bands, and 'S', 'I', 'R',
            'D' over the fitted days followed by the extension.
        fits (list[FitResult]) : every repetition, failed ones included.
        forecasts (list[Forecast]) : one per successful repetition.
    """
    window: Window
    horizon: int
    bands: dict
    fits: list
    forecasts: list

    @property
    def n_failed(self)->int:
        return len(self.fits) - len(self.forecasts)

    def summary(self)->dict:
        ok = [f for f in self.fits if f.ok]
        out = {'window': {'index': self.window.index, 'start_day': self.window.start,
                          'end_day': self.window.end},
               'horizon': self.horizon,
               'repetitions': len(self.fits),
               'n_failed': self.n_failed,
               'errors': [f.error for f in self.fits if f.error]}
        if ok:
            out['gamma'] = distribution_summary([f.params.gamma for f in ok])
            out['mu'] = distribution_summary([f.params.mu for f in ok])
            scores = [f.r2_d for f in ok if f.r2_d is not None]
            out['mean_r2_d'] = float(np.mean(scores)) if scores else None
        return out


def stability_study(data:EpiSeries,
                    window:Window,
                    spec:ObjectiveSpec,
                    bounds:ParamBounds,
                    pso_config:PsoConfig,
                    N:float,
                    repetitions:int,
                    horizon:int=DEFAULT_HORIZON,
                    base_seed:Optional[int]=None,
                    substeps:int=DEFAULT_SUBSTEPS,
                    n_jobs:Optional[int]=1,
                    progress:bool=False)->StabilityResult:
    """Fits the same window `repetitions` times (seed job_seed(base_seed,
    rep)) and extends every successful fit by `horizon` days. Failed
    repetitions are kept in the fit list and excluded from the bands.
    """
    if repetitions < 1:
        raise ValueError('repetitions must be >= 1')
    if base_seed is None:
        base_seed = pso_config.seed
    fits, forecasts = [], []
    for rep in tqdm(range(repetitions), desc='repetitions', disable=not progress):
        seed = job_seed(base_seed, rep)
        try:
            fit = fit_window(data, window, spec, bounds, replace(pso_config, seed=seed),
                             N, substeps=substeps, n_jobs=n_jobs)
            forecast = forecast_extension(fit, horizon, N)
        except SirdSwarmError as e:
            logger.warning('repetition %d failed: %s: %s', rep, type(e).__name__, e)
            fits.append(FitResult(window=window, spec=spec, seed=seed, substeps=substeps,
                                  error=f'{type(e).__name__}: {e}'))
            continue
        fits.append(fit)
        forecasts.append(forecast)
    ok = [f for f in fits if f.ok]
    if not ok:
        raise CalibrationError(f'all {repetitions} repetitions failed')
    return StabilityResult(window=window, horizon=horizon,
                           bands=stability_bands(ok, forecasts, window),
                           fits=fits, forecasts=forecasts)


def stability_bands(fits:list, forecasts:list, window:Window)->dict[str, QuantileBands]:
    days = np.arange(window.start, window.end + 1)
    params = np.vstack([f.params.to_array() for f in fits])
    beta = beta_profile(params[:, [0]], params[:, [1]], params[:, [2]], params[:, [3]],
                        days[None, :].astype(float))
    removal = params[:, 4] + params[:, 5]
    bands = {'beta': QuantileBands.from_samples(days, beta)}
    usable = removal > 0
    if np.any(usable):
        bands['r0'] = QuantileBands.from_samples(days, beta[usable] / removal[usable, None])
    bands['gamma'] = QuantileBands.from_samples([window.start], params[:, [4]])
    bands['mu'] = QuantileBands.from_samples([window.start], params[:, [5]])
    horizon = forecasts[0].horizon
    all_days = np.arange(window.start, window.end + horizon + 1)
    for k, name in enumerate(COMPARTMENTS):
        paths = np.vstack([np.concatenate([f.trajectory.states[:, k],
                                           fc.trajectory.states[1:, k]])
                           for f, fc in zip(fits, forecasts)])
        bands[name] = QuantileBands.from_samples(all_days, paths)
    return bands


class CalibrationError(SirdSwarmError):
    def __init__(self, message="Calibration failed."):
        super().__init__(message)


class SchemeInvalid(CalibrationError):
    def __init__(self, message="Window scheme invalid."):
        super().__init__(message)


class InsufficientPopulation(CalibrationError):
    def __init__(self, message="Population too small for the reported counts."):
        super().__init__(message)


class WindowOutOfRange(CalibrationError):
    def __init__(self, message="Window lies outside the data."):
        super().__init__(message)
