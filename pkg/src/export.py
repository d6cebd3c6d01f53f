"""
Dataset output and logging setup for pilotgrid.

This module provides functions for:
- Filename sanitization and output-directory containment
- Deterministic CSV datasets with a commented metadata header
- Optional JSON mirrors of datasets
- Reading point files (x_m,y_m[,mark])
- Console/file logging configuration
"""

import re
import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np


class ExportError(Exception):
    """Raised when a dataset cannot be written or read."""
    pass


def sanitize_filename(filename: str) -> str:
    """
    Reduce a name to a safe file name.

    Path separators and anything outside [a-zA-Z0-9._-] become '_',
    leading dots are stripped.

    Examples:
        >>> sanitize_filename('fig3-left.csv')
        'fig3-left.csv'
        >>> sanitize_filename('../../etc/passwd')
        '_.._etc_passwd'
    """
    filename = filename.replace('\0', '')
    filename = filename.replace('/', '_').replace('\\', '_')

    had_leading_dots = filename.startswith('.')
    filename = filename.lstrip('.')
    if had_leading_dots and filename and not filename.startswith('_'):
        filename = '_' + filename

    filename = re.sub(r'[^a-zA-Z0-9._-]', '_', filename)
    return filename or 'unnamed'


def safe_join(base_dir: Path, *parts: str) -> Path:
    """
    Join sanitized parts onto base_dir, refusing anything that escapes it.

    Raises:
        ExportError: If the resulting path is outside base_dir
    """
    safe_parts = [sanitize_filename(part) for part in parts]
    base_dir = Path(base_dir).resolve()
    result_path = base_dir.joinpath(*safe_parts).resolve()

    try:
        result_path.relative_to(base_dir)
    except ValueError:
        raise ExportError(f"Path {result_path} is outside {base_dir}")

    return result_path


def format_value(value: Any) -> str:
    """Deterministic text form of a dataset cell."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ""
    return str(value)


def _jsonable(value: Any) -> Any:
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        value = float(value)
    if isinstance(value, float) and not np.isfinite(value):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    return value


def write_dataset(
    path: Path,
    columns: Sequence[str],
    rows: Iterable[Sequence[Any]],
    metadata: Optional[Mapping[str, Any]] = None,
    json_mirror: bool = False
) -> Path:
    """
    Write a CSV dataset with '# key: value' header lines.

    Args:
        path: Output file
        columns: Column names
        rows: Row value sequences, same length as columns
        metadata: Key/value pairs echoed in the header (sorted by key)
        json_mirror: Also write <path>.json with the same content

    Returns:
        The path written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    metadata = dict(metadata or {})
    rows = [list(r) for r in rows]

    for i, row in enumerate(rows):
        if len(row) != len(columns):
            raise ExportError(f"Row {i} has {len(row)} values, expected {len(columns)}")

    with open(path, 'w', newline='') as f:
        for key in sorted(metadata):
            f.write(f"# {key}: {format_value(metadata[key])}\n")
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(v) for v in row])

    if json_mirror:
        mirror = path.with_suffix(path.suffix + '.json')
        payload = {
            "metadata": _jsonable(metadata),
            "columns": list(columns),
            "rows": [_jsonable(r) for r in rows],
        }
        with open(mirror, 'w') as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write('\n')

    return path


def read_table(path: Path) -> Tuple[Dict[str, str], List[str], List[List[str]]]:
    """
    Read a dataset written by write_dataset (or any CSV with '#' comments).

    Returns:
        (metadata, columns, rows) with all cells as strings
    """
    path = Path(path)
    metadata: Dict[str, str] = {}
    lines: List[str] = []
    try:
        with open(path, 'r') as f:
            for line in f:
                if line.startswith('#'):
                    body = line[1:].strip()
                    if ':' in body:
                        key, value = body.split(':', 1)
                        metadata[key.strip()] = value.strip()
                    continue
                if line.strip():
                    lines.append(line)
    except FileNotFoundError as e:
        raise ExportError(f"File not found: {path}") from e

    if not lines:
        raise ExportError(f"No header row in {path}")

    reader = csv.reader(lines)
    columns = next(reader)
    return metadata, columns, [row for row in reader]


def read_points_csv(path: Path) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """
    Read x_m,y_m[,mark] point files.

    Returns:
        (points, marks); marks is None when the column is absent or empty
    """
    _, columns, rows = read_table(path)
    try:
        ix, iy = columns.index('x_m'), columns.index('y_m')
    except ValueError as e:
        raise ExportError(f"{path} needs x_m and y_m columns, got {columns}") from e

    points = np.array([[float(r[ix]), float(r[iy])] for r in rows], dtype=float).reshape(-1, 2)

    marks = None
    if 'mark' in columns:
        im = columns.index('mark')
        raw = [r[im] for r in rows]
        if raw and all(v != '' for v in raw):
            marks = np.array([float(v) for v in raw], dtype=float)

    return points, marks


def read_int_column(path: Path, column: str, where: Optional[Mapping[str, str]] = None) -> np.ndarray:
    """
    Read one integer column (e.g. cluster ids) from a dataset.

    Args:
        path: Dataset path
        column: Column to read
        where: Keep only rows whose named columns hold these values
            (e.g. {"kind": "user"}); filters on absent columns are ignored
    """
    _, columns, rows = read_table(path)
    if column not in columns:
        raise ExportError(f"{path} has no column {column!r}")
    for key, value in (where or {}).items():
        if key in columns:
            at = columns.index(key)
            rows = [r for r in rows if r[at] == value]
    idx = columns.index(column)
    try:
        return np.array([int(r[idx]) for r in rows], dtype=int)
    except ValueError as e:
        raise ExportError(f"{path}: column {column!r} is not integer: {e}") from e


def setup_logging(log_dir: Optional[Path] = None, log_level: str = 'INFO') -> None:
    """
    Configure root logging.

    - Console handler (stderr)
    - File handler <log_dir>/pilotgrid.log when log_dir is given

    Args:
        log_dir: Directory for the log file, or None for console only
        log_level: Logging level (DEBUG, INFO, WARNING, ERROR)
    """
    log_format = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

    handlers: List[logging.Handler] = []

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(logging.Formatter(log_format))
    handlers.append(console_handler)

    if log_dir is not None:
        log_dir = Path(log_dir)
        log_dir.mkdir(mode=0o755, parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_dir / 'pilotgrid.log')
        file_handler.setFormatter(logging.Formatter(log_format))
        handlers.append(file_handler)

    logging.basicConfig(
        level=getattr(logging, log_level.upper()),
        handlers=handlers,
        force=True
    )
