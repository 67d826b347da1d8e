# standard library imports
from dataclasses import dataclass
import logging
from typing import Optional, Sequence
# third party imports
import numpy as np
from joblib import Parallel, delayed, cpu_count
# local imports
from sird_swarm import SirdSwarmError

"""The SIRD system with a piecewise-linear transmission rate, integrated with
a fixed step explicit Euler scheme.

    S' = -beta(t)/N * S * I
    I' =  beta(t)/N * S * I - (gamma + mu) * I
    R' =  gamma * I
    D' =  mu * I

The four right-hand sides sum to zero, so each Euler step moves mass between
compartments without creating any. A single trajectory and a batch of
trajectories go through the same vectorised kernel (simulate_batch), which is
what keeps batch results bit-identical to one-at-a-time integration whatever
the chunking or the number of workers.
"""

logger = logging.getLogger(__name__)

PARAM_NAMES = ('beta1', 'beta2', 't1', 't2', 'gamma', 'mu')
COMPARTMENTS = ('S', 'I', 'R', 'D')
DEFAULT_SUBSTEPS = 24


@dataclass(frozen=True)
class SirdParams:
    """The six fitted parameters. t1 and t2 are in data-day coordinates, the
    same clock as the trajectory start time t0.

    attributes:
        beta1 (float) : transmission rate before t1.
        beta2 (float) : transmission rate from t2 on.
        t1 (float) : start of the linear ramp.
        t2 (float) : end of the linear ramp.
        gamma (float) : recovery rate.
        mu (float) : mortality rate.
    """
    beta1: float
    beta2: float
    t1: float
    t2: float
    gamma: float
    mu: float

    def __post_init__(self):
        values = self.to_array()
        if not np.all(np.isfinite(values)):
            raise ValueError(f'non-finite parameters: {self}')
        if min(self.beta1, self.beta2, self.gamma, self.mu) < 0:
            raise ValueError(f'rates must be non-negative: {self}')
        if self.t1 > self.t2:
            raise ValueError(f't1 must not exceed t2: {self}')

    def to_array(self)->np.ndarray:
        return np.array([getattr(self, name) for name in PARAM_NAMES], dtype=float)

    def to_dict(self)->dict:
        return {name: float(getattr(self, name)) for name in PARAM_NAMES}

    @classmethod
    def from_array(cls, values)->'SirdParams':
        return cls(*[float(v) for v in values])


@dataclass(frozen=True)
class SirdState:
    """Compartment sizes at one instant."""
    S: float
    I: float
    R: float
    D: float

    def __post_init__(self):
        values = self.as_array()
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError(f'compartments must be finite and non-negative: {self}')

    @property
    def total(self)->float:
        return self.S + self.I + self.R + self.D

    def as_array(self)->np.ndarray:
        return np.array([self.S, self.I, self.R, self.D], dtype=float)


@dataclass
class Trajectory:
    """Daily states of an integration.

    Attributes:
        states (np.ndarray) : shape (n_days, 4), columns S, I, R, D.
        population (float) : N.
        t0 (float) : time of day 0 on the data clock.
    """
    states: np.ndarray
    population: float
    t0: float = 0.0

    def __len__(self):
        return self.states.shape[0]

    @property
    def S(self)->np.ndarray:
        return self.states[:, 0]

    @property
    def I(self)->np.ndarray:
        return self.states[:, 1]

    @property
    def R(self)->np.ndarray:
        return self.states[:, 2]

    @property
    def D(self)->np.ndarray:
        return self.states[:, 3]

    @property
    def finite(self)->bool:
        return bool(np.all(np.isfinite(self.states)))

    @property
    def valid(self)->bool:
        """Finite and non-negative everywhere."""
        return bool(valid_rows(self.states[None, :, :])[0])

    def compartment(self, name:str)->np.ndarray:
        return self.states[:, COMPARTMENTS.index(name)]

    def state_at(self, day:int)->SirdState:
        return SirdState(*[float(v) for v in self.states[day]])

    def last_state(self)->SirdState:
        return self.state_at(len(self) - 1)


def beta_at(params:SirdParams, t:float)->float:
    """Transmission rate at time t: beta1 before t1, linear on [t1, t2),
    beta2 from t2 on. With t1 == t2 the step happens at t1.
    """
    p = params.to_array()[:, None]
    return float(beta_profile(p[0], p[1], p[2], p[3], t)[0])


def beta_profile(beta1, beta2, t1, t2, t):
    """Vectorised beta(t) over arrays of parameters (and/or times)."""
    return _beta(beta1, beta2, t1, t2, _ramp_slope(beta1, beta2, t1, t2), t)


def _ramp_slope(beta1, beta2, t1, t2):
    width = np.where(t2 > t1, t2 - t1, 1.0)
    return (beta2 - beta1) / width


def _beta(beta1, beta2, t1, t2, slope, t):
    return np.where(t < t1, beta1, np.where(t < t2, beta1 + slope * (t - t1), beta2))


def sird_rhs(state:SirdState, beta:float, gamma:float, mu:float, N:float)->tuple:
    """Right-hand side of the SIRD system.

    Returns:
        tuple[float, float, float, float]: (S', I', R', D').
    """
    if N <= 0:
        raise ValueError('population must be positive')
    infection = beta * state.S * state.I / N
    recovery = gamma * state.I
    death = mu * state.I
    return (-infection, infection - recovery - death, recovery, death)


def simulate_batch(positions,
                   init:SirdState,
                   N:float,
                   n_days:int,
                   substeps:int=DEFAULT_SUBSTEPS,
                   t0:float=0.0)->np.ndarray:
    """Integrates one trajectory per parameter row with explicit Euler.

    The step is h = 1/substeps day, beta is evaluated at the start of every
    substep (t0 + day + j*h) and the state is sampled at whole days. Rows
    that blow up come back with inf/nan entries and rows whose step
    overshoots (h*beta or h*(gamma+mu) above 1) come back with negative
    compartments; nothing is raised here, see valid_rows.

    Args:
        positions (array-like): shape (m, 6), columns as PARAM_NAMES.
        init (SirdState): state at day 0, shared by every row.
        N (float): population.
        n_days (int): number of daily samples, day 0 included.
        substeps (int, optional): Euler steps per day. Defaults to 24.
        t0 (float, optional): data-clock time of day 0. Defaults to 0.

    Returns:
        np.ndarray: shape (m, n_days, 4).
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    if positions.shape[1] != len(PARAM_NAMES):
        raise ValueError(f'expected {len(PARAM_NAMES)} parameter columns, '
                         f'got {positions.shape[1]}')
    if n_days < 1 or substeps < 1:
        raise ValueError('n_days and substeps must be >= 1')
    if N <= 0:
        raise ValueError('population must be positive')
    m = positions.shape[0]
    beta1, beta2, t1, t2, gamma, mu = [np.ascontiguousarray(c) for c in positions.T]
    slope = _ramp_slope(beta1, beta2, t1, t2)
    h = 1.0 / substeps
    h_gamma = h * gamma
    h_mu = h * mu
    out = np.empty((m, n_days, 4))
    out[:, 0, :] = init.as_array()
    S = np.full(m, init.S)
    I = np.full(m, init.I)
    R = np.full(m, init.R)
    D = np.full(m, init.D)
    with np.errstate(over='ignore', invalid='ignore'):
        for day in range(1, n_days):
            for j in range(substeps):
                t = t0 + (day - 1) + j * h
                beta = _beta(beta1, beta2, t1, t2, slope, t)
                infection = h * beta * S * I / N
                recovery = h_gamma * I
                death = h_mu * I
                S = S - infection
                I = I + infection - recovery - death
                R = R + recovery
                D = D + death
            out[:, day, 0] = S
            out[:, day, 1] = I
            out[:, day, 2] = R
            out[:, day, 3] = D
    return out


def integrate_euler(params:SirdParams,
                    init:SirdState,
                    N:float,
                    n_days:int,
                    substeps:int=DEFAULT_SUBSTEPS,
                    t0:float=0.0)->Trajectory:
    """Integrates a single parameter set. Day 0 equals init exactly.

    Raises:
        NonFinite: if any compartment becomes inf, nan or negative.
    """
    states = simulate_batch(params.to_array()[None, :], init, N, n_days,
                            substeps=substeps, t0=t0)[0]
    trajectory = Trajectory(states=states, population=float(N), t0=float(t0))
    if not trajectory.valid:
        raise NonFinite(f'trajectory diverged or went negative for {params}')
    return trajectory


def valid_rows(states:np.ndarray)->np.ndarray:
    """Row mask of a (m, n_days, 4) batch: True where every entry is finite
    and >= 0.
    """
    with np.errstate(invalid='ignore'):
        return np.all(np.isfinite(states) & (states >= 0), axis=(1, 2))


def chunk_bounds(m:int, n_chunks:int)->list[tuple[int, int]]:
    """Splits range(m) into at most n_chunks contiguous (start, stop) pairs."""
    n_chunks = max(1, min(int(n_chunks), m))
    edges = np.linspace(0, m, n_chunks + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def resolve_jobs(n_jobs:Optional[int])->int:
    """None or a non-positive count means every available core."""
    if n_jobs is None or n_jobs <= 0:
        return cpu_count()
    return int(n_jobs)


def integrate_batch(params_batch:Sequence[SirdParams],
                    init:SirdState,
                    N:float,
                    n_days:int,
                    substeps:int=DEFAULT_SUBSTEPS,
                    t0:float=0.0,
                    n_jobs:Optional[int]=1)->list[Trajectory]:
    """integrate_euler over many parameter sets, possibly in parallel.
    Diverging or negative elements are returned as they are (check
    Trajectory.valid) instead of aborting the batch.
    """
    if len(params_batch) == 0:
        raise ValueError('params_batch must not be empty')
    positions = np.vstack([p.to_array() for p in params_batch])
    states = run_chunked(simulate_batch, positions, resolve_jobs(n_jobs),
                         init, N, n_days, substeps=substeps, t0=t0)
    trajectories = [Trajectory(states=s, population=float(N), t0=float(t0))
                    for s in states]
    n_bad = sum(not tr.valid for tr in trajectories)
    if n_bad:
        logger.debug('%d of %d trajectories are non-finite or negative', n_bad,
                     len(trajectories))
    return trajectories


def run_chunked(func, positions:np.ndarray, n_jobs:int, *args, **kwargs)->np.ndarray:
    """Applies func(chunk, *args, **kwargs) to contiguous row chunks of
    positions and stacks the results in row order. Each row's result only
    depends on that row, so the output does not depend on n_jobs.
    """
    if n_jobs <= 1 or positions.shape[0] < 2:
        return func(positions, *args, **kwargs)
    chunks = chunk_bounds(positions.shape[0], n_jobs)
    parts = Parallel(n_jobs=len(chunks))(
        delayed(func)(positions[a:b], *args, **kwargs) for a, b in chunks)
    return np.concatenate(parts, axis=0)


def r0(beta:float, gamma:float, mu:float)->float:
    """Basic reproduction number beta / (gamma + mu)."""
    if gamma + mu == 0:
        raise DegenerateRates()
    return beta / (gamma + mu)


class ModelError(SirdSwarmError):
    def __init__(self, message="SIRD model error."):
        super().__init__(message)


class NonFinite(ModelError):
    def __init__(self, message="Trajectory became non-finite or negative."):
        super().__init__(message)


class DegenerateRates(ModelError):
    def __init__(self, message="gamma + mu is zero, R0 undefined."):
        super().__init__(message)
