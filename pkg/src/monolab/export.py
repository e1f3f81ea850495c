"""Grid snapshots as CSV or a compact little-endian binary file.

Binary layout::

    magic   8 bytes   b"MLGRID1\\0"
    dims    3 x u32   nodes per axis
    ncomp   u32       values per node
    origin  3 x f64   lowest corner
    spacing f64
    data    f64[dims..., ncomp], row-major with z fastest
"""
from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fields import Grid3D, MonopoleField, sample

MAGIC = b"MLGRID1\0"
_HEADER = struct.Struct("<8s3I I3dd")


@dataclass
class Snapshot:
    origin: tuple
    spacing: float
    values: np.ndarray  # (nx, ny, nz, ncomp)
    names: tuple = ()

    @property
    def dims(self) -> tuple:
        return tuple(self.values.shape[:3])

    def points(self) -> np.ndarray:
        axes = [self.origin[k] + self.spacing * np.arange(self.dims[k]) for k in range(3)]
        g = np.meshgrid(*axes, indexing="ij")
        return np.stack(g, axis=-1).reshape(-1, 3)


def field_snapshot(F: MonopoleField, grid: Grid3D) -> Snapshot:
    """``A`` (9 components, direction-major) then ``Phi`` (3) on every node."""
    A, Phi = sample(F, grid)
    n = grid.n
    vals = np.concatenate([A.reshape(n, n, n, 9), Phi], axis=-1)
    names = tuple(f"A{i + 1}_{a + 1}" for i in range(3) for a in range(3)) + ("Phi_1", "Phi_2", "Phi_3")
    origin = tuple(grid.axis(k)[0] for k in range(3))
    return Snapshot(origin, grid.spacing, vals, names)


def scalar_snapshot(grid: Grid3D, values: np.ndarray, name: str = "value") -> Snapshot:
    n = grid.n
    origin = tuple(grid.axis(k)[0] for k in range(3))
    return Snapshot(origin, grid.spacing, np.asarray(values, dtype=float).reshape(n, n, n, 1), (name,))


def to_csv(snap: Snapshot) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = snap.names or tuple(f"c{i}" for i in range(snap.values.shape[-1]))
    w.writerow(["x", "y", "z", *names])
    flat = snap.values.reshape(-1, snap.values.shape[-1])
    for p, v in zip(snap.points(), flat):
        w.writerow([repr(float(t)) for t in p] + [repr(float(t)) for t in v])
    return buf.getvalue()


def to_bytes(snap: Snapshot) -> bytes:
    nx, ny, nz = snap.dims
    ncomp = snap.values.shape[-1]
    head = _HEADER.pack(MAGIC, nx, ny, nz, ncomp, *map(float, snap.origin), float(snap.spacing))
    return head + np.ascontiguousarray(snap.values, dtype="<f8").tobytes()


def from_bytes(blob: bytes) -> Snapshot:
    if len(blob) < _HEADER.size:
        raise ValueError("truncated grid header")
    magic, nx, ny, nz, ncomp, ox, oy, oz, h = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ValueError("not a monolab grid file")
    data = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
    if data.size != nx * ny * nz * ncomp:
        raise ValueError("grid body does not match its header")
    return Snapshot((ox, oy, oz), h, data.reshape(nx, ny, nz, ncomp).astype(float))


def write(snap: Snapshot, path: Path) -> None:
    path = Path(path)
    if path.suffix == ".csv":
        path.write_bytes(to_csv(snap).encode())
    else:
        path.write_bytes(to_bytes(snap))
