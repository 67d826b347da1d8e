# standard library imports
from dataclasses import dataclass
from enum import Enum
# third party imports
import numpy as np
# local imports
from sird_swarm import SirdSwarmError
from sird_swarm.model import Trajectory, COMPARTMENTS, valid_rows

"""Cost functions used to score a simulated window against the reports.

Low level metrics (C): MXSE, MSE, MAE, MAPE over per-day residuals.
Objective families:
    D_only    : F_D^C   = C(D)
    IRD_joint : F_IRD^C = max{C(I~), C(R~), C(D~)} where ~ is min-max scaling
                by the reported window (MAPE is scale free and skips it).

Every function here also has a row-wise form so the swarm evaluator can score
a whole batch of trajectories with a handful of array operations.
"""

FITTED_COMPARTMENTS = ('I', 'R', 'D')


class Metric(Enum):
    MXSE = 'mxse'
    MSE = 'mse'
    MAE = 'mae'
    MAPE = 'mape'


class Family(Enum):
    D_ONLY = 'd'
    IRD_JOINT = 'ird'


@dataclass(frozen=True)
class ObjectiveSpec:
    """One of the eight objective functions, named like 'ird-mxse'."""
    family: Family
    metric: Metric

    @property
    def name(self)->str:
        return f'{self.family.value}-{self.metric.value}'

    def __str__(self):
        return self.name

    @classmethod
    def parse(cls, name:str)->'ObjectiveSpec':
        try:
            family, metric = name.strip().lower().split('-')
            return cls(Family(family), Metric(metric))
        except ValueError:
            valid = ', '.join(s.name for s in all_specs())
            raise ValueError(f'unknown objective {name!r}, expected one of {valid}')


def all_specs()->list[ObjectiveSpec]:
    """The eight valid specs, D_only first, metrics in table column order."""
    return [ObjectiveSpec(f, m) for f in Family for m in Metric]


def metric_value(metric:Metric, observed, predicted)->float:
    """Evaluates a low level cost on one pair of series.

    Args:
        metric (Metric): MXSE, MSE, MAE or MAPE (MAPE is in percent).
        observed (array-like): reported values y_i.
        predicted (array-like): model values y^_i, same length.

    Raises:
        MapeZeroDenominator: under MAPE when some y_i is 0.

    Returns:
        float: the non-negative cost.
    """
    observed = np.asarray(observed, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if observed.shape != predicted.shape or observed.ndim != 1 or len(observed) == 0:
        raise ValueError('observed and predicted must be 1-d with equal length >= 1')
    if metric is Metric.MAPE:
        if np.any(observed == 0):
            raise MapeZeroDenominator()
        return float(mape_rows(observed, predicted[None, :])[0])
    return float(metric_rows(metric, (observed - predicted)[None, :])[0])


def metric_rows(metric:Metric, residuals:np.ndarray)->np.ndarray:
    """MXSE/MSE/MAE of every row of a (m, n) residual matrix."""
    if metric is Metric.MXSE:
        return np.max(residuals ** 2, axis=1)
    if metric is Metric.MSE:
        return np.mean(residuals ** 2, axis=1)
    if metric is Metric.MAE:
        return np.mean(np.abs(residuals), axis=1)
    raise ValueError(f'{metric} is not a residual metric')


def mape_rows(observed:np.ndarray, predicted:np.ndarray)->np.ndarray:
    """MAPE per row, leaving out days with a zero report. With no usable day
    the cost is +inf.
    """
    used = observed != 0
    count = int(used.sum())
    if count == 0:
        return np.full(predicted.shape[0], np.inf)
    ratios = np.abs((observed[used] - predicted[:, used]) / observed[used])
    return 100.0 * np.sum(ratios, axis=1) / count


def minmax_normalize(series, ref_min:float, ref_max:float)->np.ndarray:
    """Affine map sending ref_min to 0 and ref_max to 1. Values outside the
    reference range are not clipped.
    """
    if ref_max < ref_min:
        raise ValueError('ref_max must be >= ref_min')
    if ref_max == ref_min:
        raise DegenerateRange()
    return (np.asarray(series, dtype=float) - ref_min) / (ref_max - ref_min)


def scaled_residuals(observed:np.ndarray, predicted:np.ndarray)->np.ndarray:
    """Residuals of min-max scaled series, with the reference range taken
    from the reported window. A flat reported window falls back to raw
    residuals over max(1, |value|).
    """
    ref_min, ref_max = float(np.min(observed)), float(np.max(observed))
    try:
        return minmax_normalize(observed, ref_min, ref_max) \
            - minmax_normalize(predicted, ref_min, ref_max)
    except DegenerateRange:
        return (observed - predicted) / max(1.0, abs(ref_min))


def objective_rows(spec:ObjectiveSpec, observed:dict, states:np.ndarray)->np.ndarray:
    """Scores a batch of simulated windows.

    Args:
        spec (ObjectiveSpec): which of the eight objectives.
        observed (dict): reported 'I', 'R', 'D' arrays over the window.
        states (np.ndarray): shape (m, n, 4) simulated S, I, R, D.

    Returns:
        np.ndarray: shape (m,) costs, +inf for non-finite or negative
            trajectories.
    """
    n = states.shape[1]
    compartments = ('D',) if spec.family is Family.D_ONLY else FITTED_COMPARTMENTS
    costs = np.zeros(states.shape[0])
    with np.errstate(over='ignore', invalid='ignore'):
        for name in compartments:
            y = np.asarray(observed[name], dtype=float)
            if len(y) != n:
                raise ValueError(f'observed {name} covers {len(y)} days, trajectory {n}')
            y_hat = states[:, :, COMPARTMENTS.index(name)]
            if spec.metric is Metric.MAPE:
                part = mape_rows(y, y_hat)
            elif spec.family is Family.D_ONLY:
                part = metric_rows(spec.metric, y[None, :] - y_hat)
            else:
                part = metric_rows(spec.metric, scaled_residuals(y[None, :], y_hat))
            costs = np.maximum(costs, part)
    bad = ~valid_rows(states) | np.isnan(costs)
    costs[bad] = np.inf
    return costs


def objective_value(spec:ObjectiveSpec, observed:dict, predicted:Trajectory)->float:
    """Scores a single trajectory; +inf when it is non-finite or negative."""
    return float(objective_rows(spec, observed, predicted.states[None, :, :])[0])


def r_squared_d(observed_D, predicted_D)->float:
    """Coefficient of determination 1 - SSres/SStot on the deaths series.
    Can be negative for fits worse than the mean.
    """
    y = np.asarray(observed_D, dtype=float)
    y_hat = np.asarray(predicted_D, dtype=float)
    if y.shape != y_hat.shape:
        raise ValueError('observed and predicted must have equal length')
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        raise ConstantObserved()
    ss_res = float(np.sum((y - y_hat) ** 2))
    return 1.0 - ss_res / ss_tot


class ObjectiveError(SirdSwarmError):
    def __init__(self, message="Objective evaluation error."):
        super().__init__(message)


class MapeZeroDenominator(ObjectiveError):
    def __init__(self, message="MAPE undefined: a reported value is zero."):
        super().__init__(message)


class DegenerateRange(ObjectiveError):
    def __init__(self, message="Normalisation range is empty (ref_max == ref_min)."):
        super().__init__(message)


class ConstantObserved(ObjectiveError):
    def __init__(self, message="R^2 undefined: observed series is constant."):
        super().__init__(message)
