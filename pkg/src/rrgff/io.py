"""File formats: edge lists, GAGF binary matrices, CSV tables and JSON reports."""

from __future__ import annotations

import csv
import json
import math
import struct
from pathlib import Path

import numpy as np

from .errors import InvalidParameters
from .graphgen import RegularGraph, from_edges

MAGIC = b"GAGF"
# magic, u32 N, two reserved u32 words (pads the payload to 8-byte alignment)
HEADER = struct.Struct("<4sIII")


# ---------------------------------------------------------------- edge lists

def write_edge_list(g: RegularGraph, path) -> None:
    seed = 0 if g.seed_provenance is None else g.seed_provenance
    lines = [f"{g.n_vertices} {g.degree} {seed}"]
    lines += [f"{u} {v}" for u, v in g.edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path) -> RegularGraph:
    rows = Path(path).read_text().split("\n")
    n, r, seed = (int(x) for x in rows[0].split())
    edges = [tuple(int(x) for x in line.split()) for line in rows[1:] if line.strip()]
    if len(edges) != n * r // 2:
        raise InvalidParameters(f"expected {n * r // 2} edges, found {len(edges)}")
    g = from_edges(n, edges, seed)
    if g.degree != r:
        raise InvalidParameters("header degree does not match edge list")
    return g


# ------------------------------------------------------------------ binary

def write_gagf(matrix, path) -> None:
    """Row-major little-endian float64 with a 16-byte header (magic, u32 N, reserved).

    N is the row length; the number of rows follows from the file size.
    """
    m = np.ascontiguousarray(np.atleast_2d(matrix), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, m.shape[1], 0, 0))
        fh.write(m.tobytes(order="C"))


def read_gagf(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    magic, n, _, _ = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise InvalidParameters(f"{path}: bad magic {magic!r}")
    data = np.frombuffer(raw, dtype="<f8", offset=HEADER.size)
    if n == 0 or data.size % n:
        raise InvalidParameters(f"{path}: payload is not a whole number of rows")
    return data.reshape(-1, n).astype(float)


# --------------------------------------------------------------------- CSV

def write_samples_csv(samples, stream_ids, path) -> None:
    samples = np.atleast_2d(samples)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stream_id"] + [f"x{i}" for i in range(samples.shape[1])])
        for sid, row in zip(stream_ids, samples):
            w.writerow([sid] + [repr(float(v)) for v in row])


def read_samples_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    ids = np.array([int(r[0]) for r in rows[1:]], dtype=np.int64)
    vals = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    return vals, ids


def write_table_csv(rows: list[dict], path) -> None:
    if not rows:
        Path(path).write_text("")
        return
    keys = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row[k]) for k in keys})


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


# -------------------------------------------------------------------- JSON

def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, (float, np.floating)):
        f = float(o)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    if hasattr(o, "to_dict"):
        return _jsonable(o.to_dict())
    return o


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True)


def write_json(obj, path) -> None:
    Path(path).write_text(dumps(obj) + "\n")
