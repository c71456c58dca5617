"""
CSV codecs for detection reports: one row per scored window, and the merged event intervals.
Unused score columns are left empty.
"""
import numpy as np
import pandas as pd

from detection.detector import DetectionReport, WindowResult
from phasor.data import DEFAULT_WINDOW
from util.errors import DataError

REPORT_COLUMNS = ['window_start', 'score_s', 'score_s1', 'score_s2', 'flag', 'source']
INTERVAL_COLUMNS = ['t_start', 't_end']


def report_to_frame(report: DetectionReport) -> pd.DataFrame:
    return pd.DataFrame({'window_start': [w.start for w in report.windows],
                         'score_s': [w.score_s for w in report.windows],
                         'score_s1': [w.score_s1 for w in report.windows],
                         'score_s2': [w.score_s2 for w in report.windows],
                         'flag': [int(w.flag) for w in report.windows],
                         'source': [report.source] * len(report.windows)},
                        columns=REPORT_COLUMNS)


def write_report_csv(report: DetectionReport, path_or_buf) -> None:
    report_to_frame(report).to_csv(path_or_buf, index=False, float_format='%.17g', na_rep='', lineterminator='\n')


def _read(path_or_buf, columns: list, what: str) -> pd.DataFrame:
    try:
        df = pd.read_csv(path_or_buf, float_precision='round_trip')
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise DataError('Malformed {0} CSV: {1}'.format(what, e))
    if list(df.columns) != columns:
        raise DataError('{0} CSV schema mismatch: expected columns {1}'.format(what.capitalize(), ','.join(columns)))
    return df


def read_report_csv(path_or_buf, size: int = DEFAULT_WINDOW, source: str = None) -> DetectionReport:
    """
    :param size: window size the report was produced with (needed to merge flags)
    :param source: detector name for a report without rows; otherwise taken from the source column
    """
    df = _read(path_or_buf, REPORT_COLUMNS, 'report')
    sources = df['source'].astype(str).unique()
    if len(sources) > 1:
        raise DataError('A report CSV must come from one detector, found {0}'.format(', '.join(sources)))
    try:
        starts = df['window_start'].to_numpy(dtype=np.int64)
        scores = df[['score_s', 'score_s1', 'score_s2']].to_numpy(dtype=float)
        flags = df['flag'].to_numpy(dtype=np.int64)
    except (TypeError, ValueError) as e:
        raise DataError('Report CSV contains invalid values: {0}'.format(e))
    if np.any((flags != 0) & (flags != 1)):
        raise DataError('Report flags must be 0 or 1')
    if np.any(np.diff(starts) <= 0):
        raise DataError('Report window starts must be increasing')
    windows = [WindowResult(int(start), bool(flag), *map(float, row)) for start, flag, row in zip(starts, flags, scores)]
    name = sources[0] if len(sources) else (source or 'unknown')
    return DetectionReport(name, size, windows)


def intervals_to_frame(intervals: list) -> pd.DataFrame:
    return pd.DataFrame([list(i) for i in intervals], columns=INTERVAL_COLUMNS, dtype=np.int64)


def write_intervals_csv(intervals: list, path_or_buf) -> None:
    """Merged intervals, t_end exclusive"""
    intervals_to_frame(intervals).to_csv(path_or_buf, index=False, lineterminator='\n')


def read_intervals_csv(path_or_buf) -> list:
    df = _read(path_or_buf, INTERVAL_COLUMNS, 'interval')
    return [(int(a), int(b)) for a, b in df.itertuples(index=False)]
