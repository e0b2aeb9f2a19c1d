"""CSV and PGM export of nodal fields, polylines and cell lists."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ValidationError

PGM_MAX = 65535


def _fmt(x):
    return format(float(x), ".17g")


def write_field_csv(field, path, name="value"):
    """One row per node: ``node, x1..xn, value``."""
    grid = field.grid
    path = Path(path)
    values = np.asarray(field.values).reshape(-1)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node"] + [f"x{i + 1}" for i in range(grid.dim)] + [name])
        for node, (pt, v) in enumerate(zip(grid.points, values)):
            w.writerow([node] + [_fmt(c) for c in pt] + [_fmt(v)])
    return path


def read_field_csv(path):
    """Return ``(nodes, coords, values)`` arrays from :func:`write_field_csv` output."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0].astype(int), data[:, 1:-1], data[:, -1]


def write_pgm(field, path):
    """P2 (ASCII) greymap of a 1-D or 2-D field plus a ``.txt`` sidecar.

    Image column ``i`` is axis-0 index ``i``; image row ``j`` is axis-1 index
    ``j``. Values map linearly onto ``0..65535``; the sidecar records min/max
    so :func:`read_pgm` can undo the mapping (to within one grey level).
    """
    vals = np.asarray(field.values, dtype=float)
    finite = vals[np.isfinite(vals)]
    if vals.ndim == 1:
        vals = vals[:, None]
    if vals.ndim != 2:
        raise ValidationError("PGM export supports 1-D and 2-D fields only")
    lo = float(finite.min()) if finite.size else 0.0
    hi = float(finite.max()) if finite.size else 0.0
    span = hi - lo
    scaled = np.zeros_like(vals) if span == 0 else (vals - lo) / span * PGM_MAX
    scaled = np.where(np.isfinite(scaled), scaled, PGM_MAX)
    grey = np.rint(scaled).astype(np.int64)
    width, height = vals.shape
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"P2\n# min={_fmt(lo)} max={_fmt(hi)}\n{width} {height}\n{PGM_MAX}\n")
        for j in range(height):
            fh.write(" ".join(str(g) for g in grey[:, j]) + "\n")
    sidecar = path.with_name(path.name + ".txt")
    header = {"min": lo, "max": hi, "width": width, "height": height,
              "bounds": [list(b) for b in field.grid.bounds]}
    sidecar.write_text(json.dumps(header, indent=1, sort_keys=True) + "\n")
    return path


def read_pgm(path):
    """Inverse of :func:`write_pgm`; returns a ``(width, height)`` float array."""
    path = Path(path)
    tokens = []
    for line in path.read_text().splitlines():
        line = line.split("#", 1)[0]
        tokens.extend(line.split())
    if tokens[0] != "P2":
        raise ValidationError(f"{path} is not an ASCII PGM")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    grey = np.array(tokens[4:4 + width * height], dtype=float).reshape(height, width).T
    header = json.loads(path.with_name(path.name + ".txt").read_text())
    return header["min"] + grey / maxval * (header["max"] - header["min"])


def write_rows_csv(path, header, rows):
    """Plain table writer; floats use round-trip formatting."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def write_polyline_csv(polyline, path):
    """Ordered geodesic vertices: ``step, node, x1..xn``."""
    dim = polyline.points.shape[1]
    rows = [[k, int(n)] + [_fmt(c) for c in p]
            for k, (n, p) in enumerate(zip(polyline.nodes, polyline.points))]
    return write_rows_csv(path, ["step", "node"] + [f"x{i + 1}" for i in range(dim)], rows)
