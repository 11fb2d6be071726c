"""
File persistence for the pipeline artefacts.

Every writer goes through ``atomic_write_text``: content lands in a temporary
sibling file which is renamed over the target, so an interrupted run never
leaves a half-written artefact behind. Floats are written with ``repr`` so
outputs are byte-identical across reruns and reload losslessly.

Formats:
    PointCloud      CSV ``x1,x2,t`` (mm, mm, days)
    DensityField    CSV ``i,j,s,value`` + JSON sidecar ``<name>.json`` with
                    domain, bin sizes and times
    JSON documents  sorted keys, two-space indent
"""

import csv
import io as _io
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence, Union

import numpy as np

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def atomic_write_text(path: PathLike, text: str) -> Path:
    """Write text through a temporary file and an atomic rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]],
              comments: Sequence[str] = ()) -> Path:
    buffer = _io.StringIO()
    for line in comments:
        buffer.write(f"# {line}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return atomic_write_text(path, buffer.getvalue())


def read_csv(path: PathLike) -> List[dict]:
    """Rows of a CSV as dicts; '#' comment lines before the header are skipped."""
    with open(path, newline="") as handle:
        lines = [line for line in handle if not line.startswith("#")]
    return list(csv.DictReader(lines))


def write_json(path: PathLike, data: Any) -> Path:
    return atomic_write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def read_json(path: PathLike) -> Any:
    return json.loads(Path(path).read_text())


def _float_or_none(text: Optional[str]) -> Optional[float]:
    return float(text) if text not in (None, "") else None


def save_point_cloud(points, path: PathLike) -> Path:
    return write_csv(path, ("x1", "x2", "t"), points.records.tolist())


def load_point_cloud(path: PathLike, frame_times: Optional[Sequence[float]] = None):
    """
    Read a point CSV with header ``x1,x2,t``.

    Frame times default to the unique record times; pass them explicitly to
    keep frames without any record.
    """
    from .grid import PointCloud

    rows = read_csv(path)
    if rows and set(rows[0]) != {"x1", "x2", "t"}:
        raise ValueError(f"{path}: expected header x1,x2,t, got {list(rows[0])}")
    records = np.array([[float(r["x1"]), float(r["x2"]), float(r["t"])] for r in rows],
                       dtype=float).reshape(-1, 3)
    frames = np.unique(records[:, 2]) if frame_times is None else np.asarray(frame_times, dtype=float)
    return PointCloud(records, frames)


def save_density_field(field, path: PathLike) -> Path:
    path = Path(path)
    n1, n2, nt = field.shape
    values = field.values
    rows = ((i, j, s, float(values[i, j, s]))
            for i in range(n1) for j in range(n2) for s in range(nt))
    write_csv(path, ("i", "j", "s", "value"), rows)
    write_json(path.with_suffix(".json"), {
        "domain": field.domain.to_dict(),
        "bin_size_x1": field.bin_size_x1,
        "bin_size_x2": field.bin_size_x2,
        "times": field.times.tolist(),
        "shape": list(field.shape),
        "units": "cells per bin",
    })
    return path


def load_density_field(path: PathLike):
    from .grid import DensityField, Domain

    path = Path(path)
    meta = read_json(path.with_suffix(".json"))
    values = np.zeros(tuple(meta["shape"]))
    for row in read_csv(path):
        values[int(row["i"]), int(row["j"]), int(row["s"])] = float(row["value"])
    return DensityField(values, float(meta["bin_size_x1"]), float(meta["bin_size_x2"]),
                        Domain.from_dict(meta["domain"]), np.asarray(meta["times"], dtype=float))
