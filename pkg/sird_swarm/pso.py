# standard library imports
from dataclasses import dataclass, field
import logging
from typing import Callable, Optional
# third party imports
import numpy as np
from tqdm import tqdm
# local imports
from sird_swarm import SirdSwarmError

"""Bound constrained Particle Swarm Optimisation.

Each iteration moves every particle with

    v <- w*v + c_cog*r1*(pbest - x) + c_soc*r2*(gbest - x)
    x <- clamp(x + v)

then scores the whole swarm in one call to the batch objective. Random
numbers come from numpy's counter-based Philox generator keyed by the seed:
iteration k reads counter block k and particle i always owns row i of that
block, so a draw is fixed by (seed, iteration, particle, dimension) and the
way the objective is parallelised can never change the search.
"""

logger = logging.getLogger(__name__)

SEED_MASK = (1 << 64) - 1

# evaluate(positions (n, d)) -> costs (n,)
BatchObjective = Callable[[np.ndarray], np.ndarray]
# repair(positions (n, d)) -> positions (n, d)
RepairHook = Callable[[np.ndarray], np.ndarray]


@dataclass
class PsoConfig:
    """Swarm hyperparameters, defaulting to 10000 particles, 100 iterations
    and 0.5 for the three coefficients.
    """
    n_particles: int = 10000
    inertia: float = 0.5
    cognitive: float = 0.5
    social: float = 0.5
    max_iters: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.n_particles < 2:
            raise ValueError('n_particles must be >= 2')
        if self.max_iters < 1:
            raise ValueError('max_iters must be >= 1')
        if min(self.inertia, self.cognitive, self.social) < 0:
            raise ValueError('PSO coefficients must be >= 0')


@dataclass
class SearchBounds:
    """Per-dimension box [lower, upper]."""
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValueError('lower and upper must be 1-d arrays of equal length')
        if np.any(self.lower > self.upper):
            raise ValueError('lower bound exceeds upper bound')

    @property
    def dimension(self)->int:
        return len(self.lower)

    def clamp(self, positions:np.ndarray)->np.ndarray:
        return np.clip(positions, self.lower, self.upper)

    def contains(self, positions:np.ndarray)->bool:
        return bool(np.all(positions >= self.lower) and np.all(positions <= self.upper))


@dataclass
class SwarmState:
    positions: np.ndarray
    velocities: np.ndarray
    personal_best_pos: np.ndarray
    personal_best_cost: np.ndarray
    global_best_pos: np.ndarray
    global_best_cost: float = np.inf
    iteration: int = 0


@dataclass
class PsoResult:
    """Outcome of optimize(). Unpacks as (best_position, best_cost, history)."""
    best_position: np.ndarray
    best_cost: float
    history: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.best_position, self.best_cost, self.history))


def swarm_stream(seed:int, iteration:int)->np.random.Generator:
    """Generator positioned at the counter block of one iteration (0 is the
    initial placement).
    """
    bit_generator = np.random.Philox(key=int(seed) & SEED_MASK,
                                     counter=int(iteration) << 128)
    return np.random.Generator(bit_generator)


def initialize(config:PsoConfig, bounds:SearchBounds)->SwarmState:
    """Places particles uniformly in the box with zero velocity. Personal
    bests start at the initial positions with cost +inf.
    """
    n, d = config.n_particles, bounds.dimension
    u = swarm_stream(config.seed, 0).random((n, d))
    positions = bounds.lower + u * (bounds.upper - bounds.lower)
    return SwarmState(positions=positions,
                      velocities=np.zeros((n, d)),
                      personal_best_pos=positions.copy(),
                      personal_best_cost=np.full(n, np.inf),
                      global_best_pos=positions[0].copy(),
                      global_best_cost=np.inf,
                      iteration=0)


def evaluate_swarm(state:SwarmState, evaluate:BatchObjective)->SwarmState:
    """Scores the current positions and updates personal and global bests.
    A particle only replaces its best on a strict improvement; the global
    best is the lowest personal best, ties going to the lowest index.
    """
    costs = np.asarray(evaluate(state.positions), dtype=float).reshape(-1)
    if costs.shape[0] != state.positions.shape[0]:
        raise ValueError(f'objective returned {costs.shape[0]} costs for '
                         f'{state.positions.shape[0]} particles')
    costs = np.where(np.isnan(costs), np.inf, costs)
    improved = costs < state.personal_best_cost
    state.personal_best_pos[improved] = state.positions[improved]
    state.personal_best_cost[improved] = costs[improved]
    best = int(np.argmin(state.personal_best_cost))
    state.global_best_pos = state.personal_best_pos[best].copy()
    state.global_best_cost = float(state.personal_best_cost[best])
    return state


def step(state:SwarmState,
         config:PsoConfig,
         bounds:SearchBounds,
         evaluate:BatchObjective,
         constraint_repair:Optional[RepairHook]=None)->SwarmState:
    """One velocity/position update followed by a batch evaluation."""
    iteration = state.iteration + 1
    n, d = state.positions.shape
    r = swarm_stream(config.seed, iteration).random((n, 2 * d))
    r1, r2 = r[:, :d], r[:, d:]
    x = state.positions
    state.velocities = (config.inertia * state.velocities
                        + config.cognitive * r1 * (state.personal_best_pos - x)
                        + config.social * r2 * (state.global_best_pos - x))
    x = bounds.clamp(x + state.velocities)
    if constraint_repair is not None:
        x = constraint_repair(x)
    state.positions = x
    state.iteration = iteration
    return evaluate_swarm(state, evaluate)


def optimize(config:PsoConfig,
             bounds:SearchBounds,
             evaluate:BatchObjective,
             constraint_repair:Optional[RepairHook]=None,
             progress:bool=False)->PsoResult:
    """Runs the swarm for config.max_iters iterations.

    Args:
        config (PsoConfig): hyperparameters and seed.
        bounds (SearchBounds): the search box.
        evaluate (BatchObjective): maps (n, d) positions to (n,) costs.
        constraint_repair (RepairHook, optional): applied after clamping and
            before every evaluation (the initial one included).
        progress (bool, optional): show a tqdm bar over iterations.

    Raises:
        AllInfeasible: if no particle ever scored a finite cost.

    Returns:
        PsoResult: best position, best cost and the best cost after each
        iteration (non-increasing, max_iters entries).
    """
    state = initialize(config, bounds)
    if constraint_repair is not None:
        state.positions = constraint_repair(state.positions)
    state = evaluate_swarm(state, evaluate)
    history = []
    for _ in tqdm(range(config.max_iters), disable=not progress, leave=False):
        state = step(state, config, bounds, evaluate, constraint_repair)
        history.append(state.global_best_cost)
        logger.debug('iteration %d best cost %.6g', state.iteration, state.global_best_cost)
    if not np.isfinite(state.global_best_cost):
        raise AllInfeasible()
    return PsoResult(best_position=state.global_best_pos.copy(),
                     best_cost=state.global_best_cost,
                     history=history)


class AllInfeasible(SirdSwarmError):
    def __init__(self, message="Every evaluated particle had infinite cost."):
        super().__init__(message)
