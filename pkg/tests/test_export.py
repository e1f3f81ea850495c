import csv
import io
import struct

import numpy as np
import pytest

from monolab.bps import bps_field
from monolab.export import MAGIC, field_snapshot, from_bytes, scalar_snapshot, to_bytes, to_csv, write
from monolab.fields import Grid3D

GRID = Grid3D((0.5, 0.0, -0.25), 2.0, 5)


@pytest.fixture(scope="module")
def snap():
    return field_snapshot(bps_field(), GRID)


def test_binary_round_trip(snap):
    back = from_bytes(to_bytes(snap))
    assert back.dims == (5, 5, 5)
    assert back.spacing == snap.spacing and back.origin == snap.origin
    assert np.array_equal(back.values, snap.values)


def test_header_layout(snap):
    blob = to_bytes(snap)
    assert blob[:8] == MAGIC
    dims = struct.unpack_from("<3I", blob, 8)
    assert dims == (5, 5, 5)
    assert struct.unpack_from("<I", blob, 20) == (12,)
    assert len(blob) == 8 + 16 + 32 + 8 * 125 * 12


def test_values_match_the_field(snap):
    pts = snap.points()
    A, Phi = bps_field().evaluate(pts)
    flat = snap.values.reshape(-1, 12)
    np.testing.assert_array_equal(flat[:, 9:], Phi)
    np.testing.assert_array_equal(flat[:, :9], A.reshape(-1, 9))
    assert snap.names[0] == "A1_1" and snap.names[-1] == "Phi_3"


def test_corrupt_files_are_rejected(snap):
    blob = to_bytes(snap)
    with pytest.raises(ValueError):
        from_bytes(b"XXXXXXXX" + blob[8:])
    with pytest.raises(ValueError):
        from_bytes(blob[:-8])
    with pytest.raises(ValueError):
        from_bytes(blob[:20])


def test_csv_layout():
    vals = np.arange(27, dtype=float)
    s = scalar_snapshot(Grid3D((0, 0, 0), 1.0, 3), vals, "psi")
    rows = list(csv.reader(io.StringIO(to_csv(s))))
    assert rows[0] == ["x", "y", "z", "psi"]
    assert rows[1] == ["-1.0", "-1.0", "-1.0", "0.0"]
    assert rows[2][2] == "0.0" and rows[2][3] == "1.0"  # z runs fastest
    assert len(rows) == 28


def test_write_picks_the_format(tmp_path, snap):
    write(snap, tmp_path / "f.bin")
    write(snap, tmp_path / "f.csv")
    assert (tmp_path / "f.bin").read_bytes()[:8] == MAGIC
    assert (tmp_path / "f.csv").read_text().startswith("x,y,z,A1_1")
