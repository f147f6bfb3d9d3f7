"""CSV tables with a ``#`` metadata header, JSON run records, scan round-trips."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import ScanRecord


def fmt(value) -> str:
    """17 significant digits for reals, plain integers for counts."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if value is None:
        return ""
    return str(value)


def metadata(command: str, config: dict | None = None, **extra) -> dict:
    meta = {"xorgame_version": __version__, "command": command}
    meta.update(extra)
    for key, value in (config or {}).items():
        meta[f"config.{key}"] = value
    return meta


def write_table(path, columns, rows, meta: dict) -> Path:
    path = Path(path)
    buf = io.StringIO()
    for key, value in meta.items():
        buf.write(f"# {key} = {fmt(value)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())
    return path


def read_table(path) -> tuple[dict, list[str], list[list[str]]]:
    meta, body = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            meta[key.strip()] = value.strip()
        elif line:
            body.append(line)
    rows = list(csv.reader(body))
    return meta, rows[0], rows[1:]


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")
    return path


def write_scan(path, scan: ScanRecord, meta: dict | None = None) -> Path:
    """Columns: abscissa, one column per pattern; the integration time and kind go in the header."""
    meta = dict(meta or {})
    meta["scan.kind"] = scan.kind
    meta["scan.integration_time_s"] = scan.integration_time
    keys = list(scan.counts)
    rows = zip(scan.abscissa, *(scan.counts[k] for k in keys))
    return write_table(path, ["abscissa", *keys], rows, meta)


def read_scan(path) -> ScanRecord:
    meta, columns, rows = read_table(path)
    data = list(zip(*rows)) if rows else [[] for _ in columns]
    abscissa = np.array([float(v) for v in data[0]])
    counts = {}
    for key, col in zip(columns[1:], data[1:]):
        values = [float(v) for v in col]
        if all(v.lstrip("-").isdigit() for v in col):
            counts[key] = np.array([int(v) for v in col])
        else:
            counts[key] = np.array(values)
    return ScanRecord(abscissa, counts, float(meta["scan.integration_time_s"]), meta["scan.kind"])
