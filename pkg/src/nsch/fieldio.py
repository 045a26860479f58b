"""Flat binary and CSV serialization of grid fields.

Binary layout, all little-endian::

    b"NSCHF1"            magic, 6 bytes
    uint32               dim
    uint64 * dim         points per axis (cells, or faces for a face field)
    float64 * dim        spacing
    float64 * prod(n)    values, row-major

Face arrays use the same layout; their extents are one larger along the
normal axis, which is how ``read_field`` tells the two apart when a grid is
supplied.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .grid import Grid, GridMismatchError

MAGIC = b"NSCHF1"


class FieldFormatError(ValueError):
    pass


def write_field(path, values: np.ndarray, spacing) -> None:
    a = np.ascontiguousarray(values, dtype="<f8")
    spacing = tuple(float(h) for h in spacing)
    if a.ndim != len(spacing):
        raise ValueError(f"field has {a.ndim} axes but {len(spacing)} spacings")
    head = MAGIC + struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape)
    head += struct.pack(f"<{a.ndim}d", *spacing)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(a.tobytes(order="C"))


def read_field_raw(path) -> tuple[np.ndarray, tuple[float, ...]]:
    """Return (values, spacing) exactly as stored."""
    buf = Path(path).read_bytes()
    if buf[:6] != MAGIC:
        raise FieldFormatError(f"{path}: bad magic {buf[:6]!r}, expected {MAGIC!r}")
    off = 6
    (dim,) = struct.unpack_from("<I", buf, off)
    off += 4
    if dim not in (1, 2, 3):
        raise FieldFormatError(f"{path}: unsupported dimension {dim}")
    shape = struct.unpack_from(f"<{dim}Q", buf, off)
    off += 8 * dim
    spacing = struct.unpack_from(f"<{dim}d", buf, off)
    off += 8 * dim
    count = int(np.prod(shape))
    if len(buf) - off != 8 * count:
        raise FieldFormatError(f"{path}: payload has {len(buf) - off} bytes, expected {8 * count}")
    values = np.frombuffer(buf, dtype="<f8", count=count, offset=off).reshape(shape).astype(float)
    return values, tuple(spacing)


def read_field(path, grid: Grid | None = None, axis: int | None = None) -> np.ndarray:
    """Read a field, checking it against ``grid`` (cells, or faces of ``axis``)."""
    values, spacing = read_field_raw(path)
    if grid is not None:
        want = grid.cells if axis is None else grid.face_shape(axis)
        if values.shape != tuple(want) or not np.allclose(spacing, grid.spacing, rtol=1e-12, atol=0):
            raise GridMismatchError(f"{path}: field {values.shape} with spacing {spacing} "
                                    f"does not match expected {tuple(want)} with spacing {grid.spacing}")
    return values


def grid_from_field(path) -> Grid:
    values, spacing = read_field_raw(path)
    return Grid(values.shape, tuple(n * h for n, h in zip(values.shape, spacing)))


def write_field_csv(path, grid: Grid, values: np.ndarray, axis: int | None = None) -> None:
    """One row per point: coordinates then value."""
    pts = grid.cell_centers() if axis is None else grid.face_centers(axis)
    names = ["x", "y", "z"][: grid.dim]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + ["value"])
        cols = [p.ravel() for p in pts] + [np.asarray(values, dtype=float).ravel()]
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])
