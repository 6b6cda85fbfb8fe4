"""Field export: CSV with columns ``t,x,value`` and a compact binary layout.

The binary layout is a little-endian header ``(Nx: int64, Nt: int64, dt: float64)``
followed by the ``(Nt + 1) x Nx`` values as row-major little-endian float64.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .grid import Field, Grid

HEADER = struct.Struct("<qqd")


def write_csv(field: Field, path: str | Path) -> None:
    g = field.grid
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "value"])
        for n, t in enumerate(g.t):
            for i, x in enumerate(g.x):
                writer.writerow([repr(float(t)), repr(float(x)), repr(float(field.values[n, i]))])


def read_csv(path: str | Path, grid: Grid) -> Field:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    return Field(data[:, 2].reshape(grid.shape), grid)


def write_binary(field: Field, path: str | Path) -> None:
    g = field.grid
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(g.Nx, g.Nt, g.dt))
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def read_binary(path: str | Path) -> Field:
    raw = Path(path).read_bytes()
    nx, nt, dt = HEADER.unpack_from(raw)
    values = np.frombuffer(raw, dtype="<f8", offset=HEADER.size).reshape(nt + 1, nx).copy()
    grid = Grid(nx, float(np.round(nt * dt, 12)), dt)
    return Field(values, grid)
