"""
CSV codec for phasor streams.
One row per frame, header required, angles in radians.
"""
import io
import logging
from typing import Iterator

import numpy as np
import pandas as pd

from phasor.data import PhasorStream
from util.errors import DataError

logger = logging.getLogger(__name__)

STREAM_COLUMNS = ['ts',
                  'va_mag', 'va_ang', 'vb_mag', 'vb_ang', 'vc_mag', 'vc_ang',
                  'ia_mag', 'ia_ang', 'ib_mag', 'ib_ang', 'ic_mag', 'ic_ang']
FLOAT_FORMAT = '%.17g'


def _columns(prefix: str, part: str) -> list:
    return ['{0}{1}_{2}'.format(prefix, phase, part) for phase in ('a', 'b', 'c')]


def stream_to_frame(stream: PhasorStream) -> pd.DataFrame:
    df = pd.DataFrame({'ts': np.asarray(stream.ts, dtype=np.int64)})
    for prefix, mag, ang in (('v', stream.v_mag, stream.v_ang), ('i', stream.i_mag, stream.i_ang)):
        for k, phase in enumerate(('a', 'b', 'c')):
            df['{0}{1}_mag'.format(prefix, phase)] = mag[:, k]
            df['{0}{1}_ang'.format(prefix, phase)] = ang[:, k]
    return df[STREAM_COLUMNS]


def frame_to_stream(df: pd.DataFrame) -> PhasorStream:
    """
    Converts a parsed CSV table into a validated stream.
    """
    if list(df.columns) != STREAM_COLUMNS:
        raise DataError('Stream CSV schema mismatch: expected columns {0}, got {1}'
                        .format(','.join(STREAM_COLUMNS), ','.join(map(str, df.columns))))
    try:
        values = {c: df[c].to_numpy(dtype=float) for c in STREAM_COLUMNS[1:]}
        ts = df['ts'].to_numpy(dtype=np.int64)
    except (TypeError, ValueError) as e:
        raise DataError('Stream CSV contains non-numeric values: {0}'.format(e))
    return PhasorStream.from_arrays(
        ts,
        np.column_stack([values[c] for c in _columns('v', 'mag')]),
        np.column_stack([values[c] for c in _columns('v', 'ang')]),
        np.column_stack([values[c] for c in _columns('i', 'mag')]),
        np.column_stack([values[c] for c in _columns('i', 'ang')]))


def write_stream_csv(stream: PhasorStream, path_or_buf) -> None:
    stream_to_frame(stream).to_csv(path_or_buf, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')


def read_stream_csv(path_or_buf) -> PhasorStream:
    """
    Reads a whole stream CSV.
    :raise DataError: on schema, ordering, gap or value violations
    """
    try:
        df = pd.read_csv(path_or_buf, float_precision='round_trip')
    except pd.errors.EmptyDataError:
        raise DataError('Stream CSV is empty (a header row is required)')
    except pd.errors.ParserError as e:
        raise DataError('Malformed stream CSV: {0}'.format(e))
    stream = frame_to_stream(df)
    logger.debug('Read {0} frames'.format(len(stream)))
    return stream


def _parse_rows(lines: list, header: list) -> PhasorStream:
    try:
        df = pd.read_csv(io.StringIO(''.join(lines)), header=None, names=header, float_precision='round_trip')
    except (pd.errors.ParserError, ValueError) as e:
        raise DataError('Malformed stream CSV: {0}'.format(e))
    return frame_to_stream(df)


def _read_lines(path_or_buf, chunksize: int) -> Iterator[PhasorStream]:
    header = None
    lines = []
    while True:
        line = path_or_buf.readline()
        if not line:
            break
        if not line.strip():
            continue
        if header is None:
            header = [name.strip() for name in line.strip().split(',')]
            if header != STREAM_COLUMNS:
                raise DataError('Stream CSV schema mismatch: expected columns {0}, got {1}'
                                .format(','.join(STREAM_COLUMNS), ','.join(header)))
            continue
        lines.append(line)
        if len(lines) == chunksize:
            yield _parse_rows(lines, header)
            lines = []
    if lines:
        yield _parse_rows(lines, header)


def iter_stream_csv(path_or_buf, chunksize: int) -> Iterator[PhasorStream]:
    """
    Reads a stream CSV line by line (e.g. from a pipe) and yields a chunk as soon as `chunksize` rows have
    arrived; the last chunk may be shorter. Each chunk is validated on its own; continuity between chunks is
    checked by the consumer. Empty input yields nothing.
    """
    if chunksize < 1:
        raise DataError('Chunk size must be positive, got {0}'.format(chunksize))
    if isinstance(path_or_buf, str):
        with open(path_or_buf) as f:
            yield from _read_lines(f, chunksize)
    else:
        yield from _read_lines(path_or_buf, chunksize)
