"""Deterministic file output: CSV tables, JSON, content hashes."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

UNITS_LINE = "# units: a.u."


def format_value(x) -> str:
    if isinstance(x, str):
        return x
    x = float(x)
    if x == 0.0:
        return "0"
    return f"{x:.12g}"


def csv_text(header, rows) -> str:
    lines = [UNITS_LINE, ",".join(header)]
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    return "\n".join(lines) + "\n"


def write_csv(path: Path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(header, rows))
    return path


def read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    """Numeric CSV written by :func:`write_csv`; returns header and a 2-D array."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    header = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]]) if lines[1:] else np.empty((0, len(header)))
    return header, data


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path: Path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json_text(obj))
    return path


def git_blob_hash(data: bytes) -> str:
    """SHA-1 of ``data`` as git stores blobs."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def file_hash(path: Path) -> str:
    return git_blob_hash(Path(path).read_bytes())


def content_key(obj) -> str:
    """Stable hash of a JSON-serializable object."""
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()[:16]


def time_tag(t: float) -> str:
    """Compact file-name tag for a time value, e.g. 1514.4 -> '1514.4'."""
    return format_value(round(float(t), 6))
