"""Plain-text file formats.

Spaces are JSON documents, either a generator descriptor or explicit data
with the strict lower triangle of the distance matrix in row-major order.
Fields, sets and maps are whitespace-separated columns.  Every real is
written with 17 significant digits so that files round-trip exactly.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .space import Ball, MetricMeasureSpace, SpaceError, build_space, from_distance_matrix

__all__ = [
    "fmt",
    "dump_space",
    "load_space",
    "write_space",
    "read_space",
    "write_field",
    "read_field",
    "write_set",
    "read_set",
    "write_map",
    "read_map",
    "jsonable",
    "write_report",
    "write_table",
]

FORMAT = "bmokit-space/1"


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _num_list(values) -> str:
    return "[" + ", ".join(fmt(v) for v in values) + "]"


def dump_space(space: MetricMeasureSpace, explicit: bool = False) -> str:
    """Serialize a space; generator-built spaces keep their descriptor unless
    ``explicit`` is requested."""
    if space.descriptor is not None and not explicit:
        body = json.dumps({"format": FORMAT, "generator": space.descriptor}, sort_keys=True, indent=1)
        return body + "\n"
    n = space.n
    rows, cols = np.tril_indices(n, k=-1)
    lines = [
        "{",
        f' "format": {json.dumps(FORMAT)},',
        f' "label": {json.dumps(space.label)},',
        f' "n": {n},',
        f' "weights": {_num_list(space.weight)},',
        f' "dist": {_num_list(space.dist[rows, cols])}',
        "}",
    ]
    return "\n".join(lines) + "\n"


def load_space(text: str) -> MetricMeasureSpace:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpaceError(f"space file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SpaceError("space file must hold a JSON object")
    if "generator" in doc:
        return build_space(doc["generator"])
    try:
        n = int(doc["n"])
        lower = np.asarray(doc["dist"], dtype=float)
        weights = np.asarray(doc["weights"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise SpaceError(f"space file is missing or has malformed field: {exc}") from None
    if lower.shape != (n * (n - 1) // 2,):
        raise SpaceError(f"expected {n * (n - 1) // 2} distances, found {lower.size}")
    dist = np.zeros((n, n))
    rows, cols = np.tril_indices(n, k=-1)
    dist[rows, cols] = lower
    dist[cols, rows] = lower
    return from_distance_matrix(dist, weights, label=doc.get("label", "explicit"))


def write_space(path, space: MetricMeasureSpace, explicit: bool = False) -> None:
    Path(path).write_text(dump_space(space, explicit))


def read_space(path) -> MetricMeasureSpace:
    return load_space(Path(path).read_text())


def _rows(path, ncols):
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != ncols:
            raise ValueError(f"{path}:{lineno}: expected {ncols} columns, found {len(parts)}")
        out.append(parts)
    return out


def write_field(path, f) -> None:
    Path(path).write_text("".join(f"{i}\t{fmt(v)}\n" for i, v in enumerate(np.asarray(f, float))))


def read_field(path, n: int) -> np.ndarray:
    """Two columns ``id value``; every point must appear exactly once."""
    values = np.full(n, np.nan)
    for i, v in _rows(path, 2):
        i = int(i)
        if not 0 <= i < n or not math.isnan(values[i]):
            raise ValueError(f"{path}: point id {i} out of range or repeated")
        values[i] = float(v)
    if np.isnan(values).any():
        raise ValueError(f"{path}: missing values for {np.flatnonzero(np.isnan(values)).tolist()}")
    return values


def write_set(path, mask) -> None:
    Path(path).write_text("".join(f"{i}\n" for i in np.flatnonzero(mask)))


def read_set(path, n: int) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    for (i,) in _rows(path, 1):
        i = int(i)
        if not 0 <= i < n:
            raise ValueError(f"{path}: point id {i} out of range")
        mask[i] = True
    return mask


def write_map(path, image) -> None:
    Path(path).write_text("".join(f"{i}\t{j}\n" for i, j in enumerate(image)))


def read_map(path, n: int) -> np.ndarray:
    """Two columns ``source image``, total on the point set."""
    image = np.full(n, -1, dtype=np.intp)
    for i, j in _rows(path, 2):
        i, j = int(i), int(j)
        if not (0 <= i < n and 0 <= j < n) or image[i] >= 0:
            raise ValueError(f"{path}: bad or repeated entry {i} -> {j}")
        image[i] = j
    if (image < 0).any():
        raise ValueError(f"{path}: map undefined at {np.flatnonzero(image < 0).tolist()}")
    return image


def jsonable(obj):
    """Convert reports to JSON-safe values; non-finite floats become strings."""
    if isinstance(obj, Ball):
        return {"center": obj.center, "radius": jsonable(obj.radius)}
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def write_report(path, report: dict) -> None:
    Path(path).write_text(json.dumps(jsonable(report), sort_keys=True, indent=2) + "\n")


def write_table(path, header, rows) -> None:
    def cell(v):
        if isinstance(v, (float, np.floating)):
            return fmt(v)
        return str(v)

    lines = ["\t".join(header)] + ["\t".join(cell(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")
