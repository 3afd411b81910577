"""CSV export of benchmark rows and summary tables."""
import io
import logging
from dataclasses import asdict
from pathlib import Path as FilePath
from typing import Dict, Iterable, List, Optional, TextIO, Union

import pandas as pd

from transitveil.config import get_config
from transitveil.data.pipeline import ResultRow
from transitveil.utils.error_handlers import ConfigurationError
from transitveil.utils.helpers import format_m, format_significant

logger = logging.getLogger(__name__)

COLUMNS = ['scenario', 'map', 's', 'g', 'n_transit', 'k', 'l', 'm', 'r', 'planner', 'partitioner',
           'merge_order', 'heuristic', 'apr', 'mac', 'coverage_completed', 'total_time_s',
           'wrpt_expansions', 'evaluated_partitions']

SUMMARY_KEYS = ['planner', 'partitioner', 'merge_order', 'heuristic', 'n_transit', 'k', 'l']


def _number(value) -> str:
    """Integral floats print without a fractional part."""
    if value is None:
        return ''
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return f"{value:g}"


def rows_to_frame(rows: Iterable[ResultRow]) -> pd.DataFrame:
    """Rows as a DataFrame of display strings, columns in CSV order."""
    cfg = get_config()
    digits = cfg.CSV_SIGNIFICANT_DIGITS
    records = []
    for row in rows:
        data = asdict(row)
        data.update(
            l=_number(row.l),
            m=format_m(row.m),
            r=_number(row.r),
            apr=format_significant(row.apr, digits),
            mac=format_significant(row.mac, digits),
            coverage_completed='true' if row.coverage_completed else 'false',
            total_time_s='' if row.total_time_s is None else cfg.CSV_TIME_FORMAT.format(row.total_time_s),
            evaluated_partitions='' if row.evaluated_partitions is None else str(row.evaluated_partitions),
        )
        records.append({key: str(data[key]) for key in COLUMNS})
    return pd.DataFrame.from_records(records, columns=COLUMNS)


def to_csv(rows: Iterable[ResultRow]) -> str:
    buffer = io.StringIO()
    rows_to_frame(rows).to_csv(buffer, index=False, lineterminator='\n')
    return buffer.getvalue()


def write_results(rows: List[ResultRow], out: Union[str, FilePath, TextIO, None] = None) -> str:
    """Write rows as CSV to ``out`` (path or stream); returns the text."""
    text = to_csv(rows)
    if out is None:
        return text
    if hasattr(out, 'write'):
        out.write(text)
    else:
        FilePath(out).write_text(text)
        logger.info(f"Wrote {len(rows)} rows to {out}")
    return text


PARTITION_KEYS = ['scenario', 'planner', 'k', 'l', 'm', 'partitioner', 'merge_order', 'heuristic']


def partition_key(record) -> str:
    """Key tying a partition block to its CSV row, from the row's display strings."""
    return ','.join(str(record[key]) for key in PARTITION_KEYS)


def write_partitions(rows: List[ResultRow], out: Union[str, FilePath]) -> int:
    """Write the partition text of every partitioning row, one ``# key`` block each."""
    frame = rows_to_frame(rows)
    blocks = [f"# {partition_key(record)}\n{row.partition}"
              for row, record in zip(rows, frame.to_dict('records')) if row.partition is not None]
    FilePath(out).write_text(''.join(blocks))
    logger.info(f"Wrote {len(blocks)} partitions to {out}")
    return len(blocks)


def read_partitions(path: Union[str, FilePath]) -> Dict[str, str]:
    """Partition blocks keyed by :func:`partition_key`."""
    path = FilePath(path)
    if not path.exists():
        raise ConfigurationError(f"partition file not found: {path}")
    blocks: Dict[str, List[str]] = {}
    current = None
    for line in path.read_text().splitlines(keepends=True):
        if line.startswith('# '):
            current = line[2:].strip()
            blocks[current] = []
        elif current is None:
            raise ConfigurationError(f"{path}: partition text before the first '# ' header")
        else:
            blocks[current].append(line)
    return {key: ''.join(lines) for key, lines in blocks.items()}


def read_results(path: Union[str, FilePath]) -> pd.DataFrame:
    path = FilePath(path)
    if not path.exists():
        raise ConfigurationError(f"results file not found: {path}")
    df = pd.read_csv(path, dtype={'partitioner': str, 'merge_order': str, 'm': str}, keep_default_na=False)
    missing = [c for c in COLUMNS if c not in df.columns]
    if missing:
        raise ConfigurationError(f"{path} is not a results file; missing columns: {', '.join(missing)}")
    return df


def summarize(df: pd.DataFrame) -> pd.DataFrame:
    """Per-configuration coverage percent, mean time, mean APR and mean MAC.

    Empty APR/MAC/time cells are left out of the means.
    """
    work = df.copy()
    for column in ('apr', 'mac', 'total_time_s'):
        work[column] = pd.to_numeric(work[column], errors='coerce')
    work['coverage_completed'] = work['coverage_completed'].astype(str).str.lower() == 'true'
    summary = (work.groupby(SUMMARY_KEYS, sort=True, dropna=False)
               .agg(runs=('scenario', 'size'),
                    coverage_pct=('coverage_completed', 'mean'),
                    mean_time_s=('total_time_s', 'mean'),
                    mean_apr=('apr', 'mean'),
                    mean_mac=('mac', 'mean'))
               .reset_index())
    summary['coverage_pct'] = summary['coverage_pct'] * 100.0
    return summary


def summary_to_csv(summary: pd.DataFrame, digits: Optional[int] = None) -> str:
    digits = digits or get_config().CSV_SIGNIFICANT_DIGITS
    out = summary.copy()
    for column in ('coverage_pct', 'mean_time_s', 'mean_apr', 'mean_mac'):
        out[column] = [format_significant(v, digits) for v in out[column]]
    buffer = io.StringIO()
    out.to_csv(buffer, index=False, lineterminator='\n')
    return buffer.getvalue()
