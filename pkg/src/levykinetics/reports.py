"""Report and table writers.

Everything here is deliberately boring: JSON with sorted keys, CSV with a
header row, and atomic replacement so a crashed run never leaves a torn
file and a re-run with the same inputs is byte-identical.  Floats go
through ``repr`` (shortest round-trip form), which is locale-independent.
"""

from __future__ import annotations

import json
import os
import tempfile
from typing import Optional, Sequence

import numpy as np

SCHEMA_VERSION = 1

__all__ = [
    "SCHEMA_VERSION",
    "write_json_report",
    "write_curve_csv",
    "write_trajectory_csv",
]


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(obj):
    """Convert numpy scalars/arrays and other common values to JSON types."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        # JSON has no Infinity/NaN; encode as strings rather than emitting
        # non-standard tokens that other parsers reject
        return repr(obj)
    return obj


def write_json_report(path: str, payload: dict) -> None:
    """Write ``payload`` as a JSON report with a schema_version stamp.

    Keys are sorted and the file is replaced atomically, so identical
    payloads produce byte-identical files.
    """
    body = dict(payload)
    body["schema_version"] = SCHEMA_VERSION
    text = json.dumps(_jsonable(body), sort_keys=True, indent=2)
    _atomic_write(path, text + "\n")


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_curve_csv(path: str, times, values, stderr: Optional[Sequence] = None) -> None:
    """Write a diagnostic curve as ``time,value,stderr`` rows."""
    times = np.asarray(times)
    values = np.asarray(values)
    if times.shape != values.shape:
        raise ValueError("times and values must have equal length")
    lines = ["time,value,stderr"]
    for i in range(len(times)):
        err = "" if stderr is None else _fmt(stderr[i])
        lines.append(f"{_fmt(times[i])},{_fmt(values[i])},{err}")
    _atomic_write(path, "\n".join(lines) + "\n")


def write_trajectory_csv(path: str, batch) -> None:
    """Write a TrajectoryBatch as one row per (trajectory, snapshot).

    Columns: trajectory id, time, then the flattened position and velocity
    components in particle-major order.
    """
    s, m, n, d = batch.xs.shape
    header = ["trajectory", "time"]
    header += [f"x_{i}_{k}" for i in range(n) for k in range(d)]
    header += [f"v_{i}_{k}" for i in range(n) for k in range(d)]
    lines = [",".join(header)]
    for traj in range(m):
        for j in range(s):
            row = [str(traj), _fmt(batch.times[j])]
            row += [_fmt(c) for c in batch.xs[j, traj].ravel()]
            row += [_fmt(c) for c in batch.vs[j, traj].ravel()]
            lines.append(",".join(row))
    _atomic_write(path, "\n".join(lines) + "\n")
