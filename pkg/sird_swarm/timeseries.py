# standard library imports
from dataclasses import dataclass, field
import datetime as dt
import logging
import re
from typing import Iterable, Optional, Sequence
# third party imports
import numpy as np
import pandas as pd
# local imports
from sird_swarm import SirdSwarmError

"""Ingests reported epidemic data and turns it into the per-day series the
calibrator consumes.

pipeline:
CSV -> RawSeries -> interpolate_missing -> daily_from_cumulative (with
negative correction) -> infectious recursion -> EpiSeries (-> SmoothedSeries).

All counts are held as floats since smoothing produces non-integers.
"""

logger = logging.getLogger(__name__)

COUNT_COLUMNS = ('confirmed', 'recovered', 'deaths')
INPUT_HEADER = ('date',) + COUNT_COLUMNS
OUTPUT_HEADER = ('date', 'infectious', 'recovered_cum', 'deaths_cum', 'new_cases')
SMOOTHING_WIDTH = 7


@dataclass
class CleaningReport:
    """Counts of cells touched by the cleaning pipeline.

    attributes:
        n_interpolated (int) : missing cumulative cells filled by interpolation.
        n_negative_corrected (int) : negative daily differences replaced.
        n_clamped (int) : days on which the infectious recursion went below 0.
    """
    n_interpolated: int = 0
    n_negative_corrected: int = 0
    n_clamped: int = 0

    def to_dict(self):
        return {'interpolated': self.n_interpolated,
                'negative_corrected': self.n_negative_corrected,
                'clamped': self.n_clamped}


@dataclass
class RawSeries:
    """Reported cumulative counts as read from the input. Missing counts are
    NaN.

    Attributes:
        frame (pd.DataFrame) : indexed by a strictly increasing DatetimeIndex
            named 'date', with float columns confirmed, recovered, deaths.
    """
    frame: pd.DataFrame

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not isinstance(self.frame.index, pd.DatetimeIndex):
            raise DataFormatError('RawSeries index must be a DatetimeIndex')
        missing = [c for c in COUNT_COLUMNS if c not in self.frame.columns]
        if missing:
            raise DataFormatError(f'RawSeries missing columns {missing}')
        if not self.frame.index.is_monotonic_increasing or not self.frame.index.is_unique:
            raise DataFormatError('dates must be strictly increasing')
        values = self.frame[list(COUNT_COLUMNS)].to_numpy(dtype=float)
        present = values[~np.isnan(values)]
        if np.any(~np.isfinite(present)) or np.any(present < 0):
            raise DataFormatError('counts must be finite and non-negative')

    def __len__(self):
        return len(self.frame)

    @classmethod
    def from_records(cls, records:Iterable[Sequence])->'RawSeries':
        """Builds a RawSeries from (date, confirmed, recovered, deaths) tuples.
        None marks a missing count.
        """
        rows = list(records)
        if len(rows) == 0:
            raise EmptySeries()
        dates = pd.DatetimeIndex([pd.Timestamp(r[0]) for r in rows], name='date')
        data = {col: [np.nan if r[k+1] is None else float(r[k+1]) for r in rows]
                for k, col in enumerate(COUNT_COLUMNS)}
        return cls(pd.DataFrame(data, index=dates))


@dataclass
class EpiSeries:
    """Cleaned per-day series on the full daily grid.

    Attributes:
        start_date (datetime.date) : date of day 0.
        I (np.ndarray) : infectious count per day (recursion derived).
        R_cum (np.ndarray) : cumulative recovered.
        D_cum (np.ndarray) : cumulative deaths.
        N_new (np.ndarray) : new cases per day.
        report (CleaningReport) : what the cleaning pipeline changed.
    """
    start_date: dt.date
    I: np.ndarray
    R_cum: np.ndarray
    D_cum: np.ndarray
    N_new: np.ndarray
    report: CleaningReport = field(default_factory=CleaningReport)

    def __post_init__(self):
        self.I = np.asarray(self.I, dtype=float)
        self.R_cum = np.asarray(self.R_cum, dtype=float)
        self.D_cum = np.asarray(self.D_cum, dtype=float)
        self.N_new = np.asarray(self.N_new, dtype=float)
        lengths = {len(self.I), len(self.R_cum), len(self.D_cum), len(self.N_new)}
        if len(lengths) != 1:
            raise ValueError(f'series lengths differ: {sorted(lengths)}')
        if len(self.I) == 0:
            raise EmptySeries()
        for name in ('I', 'R_cum', 'D_cum', 'N_new'):
            values = getattr(self, name)
            if np.any(~np.isfinite(values)) or np.any(values < 0):
                raise DataFormatError(f'{name} must be finite and non-negative')

    def __len__(self):
        return len(self.I)

    @property
    def length(self)->int:
        return len(self.I)

    @property
    def T(self)->int:
        """Index of the last day."""
        return len(self.I) - 1

    @property
    def dates(self)->pd.DatetimeIndex:
        return pd.date_range(self.start_date, periods=len(self), freq='D')

    def date_of(self, day:int)->dt.date:
        return self.start_date + dt.timedelta(days=int(day))

    def day_of(self, date)->int:
        return (pd.Timestamp(date).date() - self.start_date).days

    def window(self, start:int, end:int)->dict:
        """Reported I, R, D over days start..end inclusive."""
        sl = slice(start, end + 1)
        return {'I': self.I[sl], 'R': self.R_cum[sl], 'D': self.D_cum[sl]}

    def to_frame(self)->pd.DataFrame:
        return pd.DataFrame({'date': self.dates.strftime('%Y-%m-%d'),
                             'infectious': self.I,
                             'recovered_cum': self.R_cum,
                             'deaths_cum': self.D_cum,
                             'new_cases': self.N_new})

    def to_csv(self, path:str):
        self.to_frame().to_csv(path, index=False, columns=list(OUTPUT_HEADER))


@dataclass
class SmoothedSeries(EpiSeries):
    """An EpiSeries whose four series went through moving_average7."""
    window_width: int = SMOOTHING_WIDTH


def read_csv(path:str)->RawSeries:
    """Reads a `date,confirmed,recovered,deaths` CSV of cumulative counts.
    Empty cells are missing values. Parse failures report the 1-based line
    number of the offending row (the header is line 1).

    Args:
        path (str): location of the input file.

    Raises:
        DataFormatError: on a missing/invalid header, a row with too many
            fields, bytes that are not UTF-8 or an unparseable cell.
        EmptySeries: if the file holds a header but no rows.

    Returns:
        RawSeries: the parsed series.
    """
    try:
        table = pd.read_csv(path, dtype=str, keep_default_na=False,
                            skipinitialspace=True, encoding='utf-8')
    except pd.errors.EmptyDataError:
        raise DataFormatError('line 1: empty file, expected header '
                              + ','.join(INPUT_HEADER), line=1)
    except pd.errors.ParserError as e:
        # pandas counts lines from 1 with the header included
        match = re.search(r'line (\d+)', str(e))
        line = int(match.group(1)) if match else None
        raise DataFormatError(f'line {line}: {e}' if line else str(e), line=line)
    except UnicodeDecodeError:
        line = _undecodable_line(path)
        raise DataFormatError(f'line {line}: not valid UTF-8 text', line=line)
    header = [c.strip() for c in table.columns]
    if header != list(INPUT_HEADER):
        raise DataFormatError(f'line 1: header {",".join(header)} does not match '
                              + ','.join(INPUT_HEADER), line=1)
    table.columns = header
    if len(table) == 0:
        raise EmptySeries()
    dates = []
    counts = {c: [] for c in COUNT_COLUMNS}
    for k, row in enumerate(table.itertuples(index=False)):
        line = k + 2
        try:
            dates.append(dt.date.fromisoformat(_cell(row.date)))
        except ValueError:
            raise DataFormatError(f'line {line}: invalid date {row.date!r}', line=line)
        for col in COUNT_COLUMNS:
            cell = _cell(getattr(row, col))
            if cell == '':
                counts[col].append(np.nan)
                continue
            try:
                value = float(cell)
            except ValueError:
                raise DataFormatError(f'line {line}: invalid {col} count {cell!r}', line=line)
            if not np.isfinite(value) or value < 0:
                raise DataFormatError(f'line {line}: {col} must be finite and >= 0', line=line)
            counts[col].append(value)
    index = pd.DatetimeIndex(pd.to_datetime(dates), name='date')
    if not index.is_monotonic_increasing or not index.is_unique:
        bad = int(np.argmax(np.diff(index.asi8) <= 0)) + 3
        raise DataFormatError(f'line {bad}: dates must be strictly increasing', line=bad)
    return RawSeries(pd.DataFrame(counts, index=index))


def _undecodable_line(path:str)->Optional[int]:
    with open(path, 'rb') as f:
        for k, raw in enumerate(f, start=1):
            try:
                raw.decode('utf-8')
            except UnicodeDecodeError:
                return k
    return None


def _cell(value)->str:
    # short rows come back as NaN rather than ''
    if not isinstance(value, str):
        return ''
    return value.strip()


def interpolate_missing(raw:RawSeries)->RawSeries:
    """Puts the series on the full daily grid and fills every interior gap by
    linear interpolation between the nearest present neighbours. Present
    values are left as they are.
    """
    if len(raw) == 0:
        raise EmptySeries()
    frame = raw.frame[list(COUNT_COLUMNS)]
    for col in COUNT_COLUMNS:
        if np.isnan(frame[col].iloc[0]) or np.isnan(frame[col].iloc[-1]):
            raise MissingEndpoint(f"column '{col}' has a missing first or last value")
    grid = pd.date_range(frame.index[0], frame.index[-1], freq='D', name='date')
    filled = frame.reindex(grid).interpolate(method='time')
    return RawSeries(filled)


def count_missing(raw:RawSeries)->int:
    """Number of cells that interpolate_missing will fill, including the
    rows added for absent dates.
    """
    frame = raw.frame[list(COUNT_COLUMNS)]
    grid = pd.date_range(frame.index[0], frame.index[-1], freq='D')
    return int(frame.reindex(grid).isna().to_numpy().sum())


def daily_from_cumulative(cum)->np.ndarray:
    """Converts cumulative counts to daily counts. The first day keeps its
    cumulative value; every negative difference is replaced by the most
    recent non-negative daily value to its left, or 0 when there is none.

    Args:
        cum (array-like): cumulative counts, length >= 1.

    Returns:
        np.ndarray: daily counts, element-wise >= 0.
    """
    return _daily_with_count(cum)[0]


def _daily_with_count(cum)->tuple[np.ndarray, int]:
    values = pd.Series(np.asarray(cum, dtype=float))
    if len(values) == 0:
        raise EmptySeries()
    daily = values.diff()
    daily.iloc[0] = values.iloc[0]
    negative = daily < 0
    corrected = daily.mask(negative).ffill().fillna(0.0)
    return corrected.to_numpy(), int(negative.sum())


def moving_average7(series)->np.ndarray:
    """Trailing seven day mean: day t averages days t-6..t, and the first six
    days average over the 1..6 values that exist.
    """
    values = pd.Series(np.asarray(series, dtype=float))
    if len(values) == 0:
        raise EmptySeries()
    return values.rolling(SMOOTHING_WIDTH, min_periods=1).mean().to_numpy()


def build_epi_series(raw:RawSeries)->EpiSeries:
    """Runs the full cleaning pipeline on a raw series.

    The infectious count follows I(t) = I(t-1) + N_new(t) - R_d(t) - D_d(t)
    seeded with I(0) = max(0, N_new(0) - R_d(0) - D_d(0)). Days where the
    running count would go negative are clamped at 0 and counted in the
    report.
    """
    n_missing = count_missing(raw)
    grid = interpolate_missing(raw)
    frame = grid.frame
    new_cases, n_neg_c = _daily_with_count(frame['confirmed'].to_numpy())
    recovered, n_neg_r = _daily_with_count(frame['recovered'].to_numpy())
    deaths, n_neg_d = _daily_with_count(frame['deaths'].to_numpy())
    infectious, n_clamped = infectious_recursion(new_cases, recovered, deaths)
    report = CleaningReport(n_interpolated=n_missing,
                            n_negative_corrected=n_neg_c + n_neg_r + n_neg_d,
                            n_clamped=n_clamped)
    if report.n_negative_corrected or report.n_clamped:
        logger.info('Cleaning corrected %d negative differences and clamped %d days',
                    report.n_negative_corrected, report.n_clamped)
    return EpiSeries(start_date=frame.index[0].date(),
                     I=infectious,
                     R_cum=np.cumsum(recovered),
                     D_cum=np.cumsum(deaths),
                     N_new=new_cases,
                     report=report)


def infectious_recursion(new_cases, recovered_daily, deaths_daily)->tuple[np.ndarray, int]:
    """Accumulates the infectious count from daily flows.

    returns:
        tuple[np.ndarray, int] : the infectious series and the number of days
        clamped at zero (the seed day included).
    """
    new_cases = np.asarray(new_cases, dtype=float)
    flow = new_cases - np.asarray(recovered_daily, dtype=float) \
        - np.asarray(deaths_daily, dtype=float)
    infectious = np.empty_like(flow)
    clamped = 0
    running = 0.0
    for t, change in enumerate(flow):
        running = running + change
        if running < 0:
            running = 0.0
            clamped += 1
        infectious[t] = running
    return infectious, clamped


def smooth_epi_series(epi:EpiSeries)->SmoothedSeries:
    """Applies moving_average7 to all four series."""
    return SmoothedSeries(start_date=epi.start_date,
                          I=moving_average7(epi.I),
                          R_cum=moving_average7(epi.R_cum),
                          D_cum=moving_average7(epi.D_cum),
                          N_new=moving_average7(epi.N_new),
                          report=epi.report)


def load_epi_series(path:str, smooth:bool=False)->EpiSeries:
    """Reads and cleans a CSV in one call, optionally smoothing the result."""
    epi = build_epi_series(read_csv(path))
    if smooth:
        return smooth_epi_series(epi)
    return epi


class TimeseriesError(SirdSwarmError):
    def __init__(self, message="Time series invalid."):
        super().__init__(message)


class EmptySeries(TimeseriesError):
    def __init__(self, message="Series contains no records."):
        super().__init__(message)


class MissingEndpoint(TimeseriesError):
    def __init__(self, message="First or last value of a column is missing."):
        super().__init__(message)


class DataFormatError(TimeseriesError):
    def __init__(self, message="Input data format invalid.", line:Optional[int]=None):
        self.line = line
        super().__init__(message)
