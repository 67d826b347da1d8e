# standard library imports
from dataclasses import dataclass, fields, asdict
import json
import os
from typing import Optional
# local imports
from sird_swarm import SirdSwarmError
from sird_swarm.calibration import ParamBounds, DEFAULT_TAU, DEFAULT_DELTA, DEFAULT_HORIZON
from sird_swarm.model import DEFAULT_SUBSTEPS
from sird_swarm.objectives import ObjectiveSpec
from sird_swarm.pso import PsoConfig

"""Run configuration. Values are resolved in three layers: the built-in
defaults below, then a JSON config file, then command-line flags.

An example file with every key is shipped at
data/config_files/run_config.json.
"""

BOUND_CHOICES = ('stage1', 'stage2', 'custom')


@dataclass
class RunConfig:
    input: Optional[str] = None
    population: Optional[float] = None
    tau: int = DEFAULT_TAU
    delta: int = DEFAULT_DELTA
    objective: str = 'ird-mxse'
    bounds: str = 'stage2'
    custom_bounds: Optional[dict] = None
    particles: int = 10000
    iters: int = 100
    inertia: float = 0.5
    cognitive: float = 0.5
    social: float = 0.5
    seed: int = 0
    horizon: int = DEFAULT_HORIZON
    reps: int = 1000
    substeps: int = DEFAULT_SUBSTEPS
    smooth: bool = False
    threads: Optional[int] = None
    out_dir: str = 'results'

    def validate(self, need_input:bool=True):
        """Checks the settings a run depends on.

        Raises:
            ConfigError: on the first invalid setting found.
        """
        if need_input:
            if not self.input:
                raise ConfigError('--input is required')
            if not os.path.isfile(self.input):
                raise ConfigError(f'input file {self.input!r} does not exist')
        if self.population is None or not self.population > 0:
            raise ConfigError('--population must be given and > 0')
        if self.bounds not in BOUND_CHOICES:
            raise ConfigError(f'bounds must be one of {BOUND_CHOICES}, got {self.bounds!r}')
        if self.bounds == 'custom' and not self.custom_bounds:
            raise ConfigError("bounds 'custom' needs a custom_bounds object in the config file")
        if self.substeps < 1 or self.horizon < 1 or self.reps < 1:
            raise ConfigError('substeps, horizon and reps must be >= 1')
        # surface bad values as ConfigError rather than deep in a run
        try:
            self.objective_spec()
            self.param_bounds()
            self.pso_config()
        except (ValueError, KeyError, TypeError) as e:
            raise ConfigError(str(e))

    def objective_spec(self)->ObjectiveSpec:
        return ObjectiveSpec.parse(self.objective)

    def param_bounds(self, name:Optional[str]=None)->ParamBounds:
        name = name or self.bounds
        if name == 'custom':
            return ParamBounds.from_dict(self.custom_bounds or {})
        return ParamBounds.preset(name)

    def pso_config(self)->PsoConfig:
        return PsoConfig(n_particles=self.particles, inertia=self.inertia,
                         cognitive=self.cognitive, social=self.social,
                         max_iters=self.iters, seed=self.seed)

    def to_dict(self)->dict:
        return asdict(self)


def config_keys()->set:
    return {f.name for f in fields(RunConfig)}


def load_config(path:str)->dict:
    """Reads a JSON config file. Keys must be RunConfig field names."""
    try:
        with open(path, 'r') as f:
            values = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f'config file {path!r} does not exist')
    except json.JSONDecodeError as e:
        raise ConfigError(f'config file {path!r} is not valid JSON: {e}')
    if not isinstance(values, dict):
        raise ConfigError(f'config file {path!r} must hold a JSON object')
    unknown = sorted(set(values) - config_keys())
    if unknown:
        raise ConfigError(f'unknown config keys in {path!r}: {unknown}')
    return values


def resolve_config(file_values:Optional[dict]=None,
                   overrides:Optional[dict]=None)->RunConfig:
    """Built-in defaults <- config file values <- command-line overrides.
    Overrides set to None are treated as not given.
    """
    values = {}
    values.update(file_values or {})
    values.update({k: v for k, v in (overrides or {}).items()
                   if v is not None and k in config_keys()})
    return RunConfig(**values)


class ConfigError(SirdSwarmError):
    def __init__(self, message="Configuration invalid."):
        super().__init__(message)
