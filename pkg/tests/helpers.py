# standard library imports
import datetime as dt
import os
import sys
sys.path.append('..')
# third party imports
import numpy as np
import pandas as pd
# local imports
from sird_swarm.model import SirdParams, SirdState, integrate_euler
from sird_swarm.timeseries import EpiSeries

"""Shared fixtures for the test suite: synthetic epidemics produced by the
model itself, written out in the input CSV format when a test needs a file.
"""

TEST_DIR = os.path.dirname(os.path.abspath(__file__))
DATA_DIR = os.path.join(os.path.dirname(TEST_DIR), 'data', 'test_data')
START_DATE = dt.date(2020, 3, 18)

# a ramp from 0.4 to 0.15 between days 8 and 18, comfortably inside stage2 bounds
TRUE_PARAMS = SirdParams(beta1=0.4, beta2=0.15, t1=8.0, t2=18.0, gamma=0.1, mu=0.01)
POPULATION = 1e6
INITIAL = SirdState(S=POPULATION - 1000.0, I=1000.0, R=0.0, D=0.0)


def fixture_path(name:str)->str:
    return os.path.join(DATA_DIR, name)


def simulate_epi_series(params:SirdParams=TRUE_PARAMS,
                        n_days:int=40,
                        init:SirdState=INITIAL,
                        N:float=POPULATION,
                        substeps:int=4,
                        start_date:dt.date=START_DATE)->EpiSeries:
    """An EpiSeries whose I, R, D are exactly a model trajectory."""
    trajectory = integrate_euler(params, init, N, n_days, substeps=substeps)
    confirmed = trajectory.I + trajectory.R + trajectory.D
    new_cases = np.concatenate([[confirmed[0]], np.diff(confirmed)])
    return EpiSeries(start_date=start_date,
                     I=trajectory.I.copy(),
                     R_cum=trajectory.R.copy(),
                     D_cum=trajectory.D.copy(),
                     N_new=new_cases)


def write_reported_csv(path:str, epi:EpiSeries):
    """Writes an EpiSeries back as cumulative confirmed/recovered/deaths."""
    frame = pd.DataFrame({'date': epi.dates.strftime('%Y-%m-%d'),
                          'confirmed': epi.I + epi.R_cum + epi.D_cum,
                          'recovered': epi.R_cum,
                          'deaths': epi.D_cum})
    frame.to_csv(path, index=False, float_format='%.10f')


def write_noisy_reported_csv(path:str, epi:EpiSeries, noise:float=0.03, seed:int=0):
    """write_reported_csv with seeded multiplicative noise on every cumulative
    column. Drops in the noisy counts are left for preprocessing to correct.
    """
    rng = np.random.default_rng(seed)
    columns = {'confirmed': epi.I + epi.R_cum + epi.D_cum,
               'recovered': epi.R_cum,
               'deaths': epi.D_cum}
    frame = pd.DataFrame({'date': epi.dates.strftime('%Y-%m-%d')})
    for name, values in columns.items():
        factor = 1.0 + noise * rng.standard_normal(len(values))
        frame[name] = np.clip(values * factor, 0.0, None).round()
    frame.to_csv(path, index=False)
