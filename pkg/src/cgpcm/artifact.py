"""Model artifacts and series files.

An artifact is a directory holding ``model.json`` (metadata plus a manifest of
array shapes) and one raw little-endian float64 blob per array. Series are
CSV files with a header row; floats are written with 17 significant digits so
they parse back bit-exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

MANIFEST = "model.json"
_DTYPE = "<f8"


def save_artifact(directory, meta: dict, arrays: dict) -> str:
    """Write ``meta`` and ``arrays``; returns the SHA-256 of the written content."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    manifest = {}
    for name in sorted(arrays):
        a = np.array(arrays[name], dtype=float, order="C")
        fname = f"{name}.f64"
        (d / fname).write_bytes(a.astype(_DTYPE).tobytes())
        manifest[name] = {"file": fname, "shape": list(a.shape), "dtype": _DTYPE}
    doc = dict(meta)
    doc["arrays"] = manifest
    (d / MANIFEST).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return artifact_hash(d)


def load_artifact(directory):
    """Return ``(meta, arrays)``; raises ``ValueError`` on a malformed artifact."""
    d = Path(directory)
    path = d / MANIFEST
    if not path.is_file():
        raise ValueError(f"{d} is not an artifact directory (missing {MANIFEST})")
    meta = json.loads(path.read_text())
    manifest = meta.pop("arrays", {})
    arrays = {}
    for name, spec in manifest.items():
        raw = (d / spec["file"]).read_bytes()
        shape = tuple(spec["shape"])
        expected = int(np.prod(shape)) * 8
        if len(raw) != expected:
            raise ValueError(f"blob {spec['file']} has {len(raw)} bytes, expected {expected}")
        arrays[name] = np.frombuffer(raw, dtype=spec.get("dtype", _DTYPE)).astype(float).reshape(shape)
    return meta, arrays


def artifact_hash(directory) -> str:
    """SHA-256 over the manifest and blobs, in a fixed order."""
    d = Path(directory)
    h = hashlib.sha256()
    doc = json.loads((d / MANIFEST).read_text())
    h.update((d / MANIFEST).read_bytes())
    for name in sorted(doc.get("arrays", {})):
        h.update((d / doc["arrays"][name]["file"]).read_bytes())
    return h.hexdigest()


def write_csv(path, columns: dict):
    """Write equal-length columns under a header row of their names."""
    names = list(columns)
    data = [np.asarray(columns[n]).reshape(-1) for n in names]
    if len({c.size for c in data}) > 1:
        raise ValueError("columns must have equal length")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*data):
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (str, np.str_)):
        return str(v)
    return repr(float(v))


def read_csv(path, required=None):
    """Read a headered numeric CSV into a dict of float arrays.

    Raises
    ------
    ValueError
        On a missing header, missing required columns, ragged rows or non-numeric/non-finite cells.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    missing = [c for c in (required or []) if c not in header]
    if missing:
        raise ValueError(f"{path}: missing column(s) {missing}; header is {header}")
    body = [r for r in rows[1:] if any(cell.strip() for cell in r)]
    problems = []
    values = np.empty((len(body), len(header)))
    for i, r in enumerate(body):
        if len(r) != len(header):
            problems.append(f"row {i + 2}: expected {len(header)} fields, got {len(r)}")
            continue
        for j, cell in enumerate(r):
            try:
                values[i, j] = float(cell)
            except ValueError:
                problems.append(f"row {i + 2}, column {header[j]!r}: not a number ({cell!r})")
                continue
            if not np.isfinite(values[i, j]):
                problems.append(f"row {i + 2}, column {header[j]!r}: non-finite value")
    if problems:
        raise ValueError(f"{path}: " + "; ".join(problems[:10]) + (" ..." if len(problems) > 10 else ""))
    return {h: values[:, j].copy() for j, h in enumerate(header)}


def read_series(path):
    """Read a ``t,y`` CSV; times must be strictly increasing."""
    cols = read_csv(path, required=["t", "y"])
    t, y = cols["t"], cols["y"]
    if t.size < 2:
        raise ValueError(f"{path}: need at least two rows")
    bad = np.flatnonzero(np.diff(t) <= 0)
    if bad.size:
        raise ValueError(f"{path}: times are not strictly increasing (first at row {bad[0] + 3})")
    return t, y


__all__ = [
    "artifact_hash",
    "load_artifact",
    "read_csv",
    "read_series",
    "save_artifact",
    "write_csv",
]
