import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nsch.fieldio import (FieldFormatError, grid_from_field, read_field, read_field_raw, write_field,
                          write_field_csv)
from nsch.grid import Grid, GridMismatchError


@settings(max_examples=40, deadline=None)
@given(arrays(float, st.sampled_from([(7,), (3, 4), (5, 2)]),
              elements=st.floats(allow_nan=False, allow_infinity=False, width=64)),
       st.floats(0.01, 10.0))
def test_round_trip_is_bit_exact(tmp_path_factory, values, h):
    p = tmp_path_factory.mktemp("f") / "a.nschf"
    spacing = (h,) * values.ndim
    write_field(p, values, spacing)
    back, sp = read_field_raw(p)
    assert back.tobytes() == np.ascontiguousarray(values).tobytes()
    assert sp == spacing


def test_grid_checks(tmp_path):
    g = Grid((4, 3), (2.0, 1.5))
    p = tmp_path / "c.nschf"
    write_field(p, np.arange(12.0).reshape(4, 3), g.spacing)
    assert read_field(p, g).shape == (4, 3)
    assert grid_from_field(p) == g
    with pytest.raises(GridMismatchError):
        read_field(p, Grid((4, 3), (2.0, 3.0)))
    with pytest.raises(GridMismatchError):
        read_field(p, g, axis=0)
    q = tmp_path / "u0.nschf"
    write_field(q, np.zeros(g.face_shape(0)), g.spacing)
    assert read_field(q, g, axis=0).shape == (5, 3)


def test_corrupt_files_rejected(tmp_path):
    p = tmp_path / "bad.nschf"
    p.write_bytes(b"garbage")
    with pytest.raises(FieldFormatError):
        read_field_raw(p)
    write_field(p, np.ones(4), (0.25,))
    p.write_bytes(p.read_bytes()[:-3])
    with pytest.raises(FieldFormatError):
        read_field_raw(p)


def test_csv_export(tmp_path):
    g = Grid((2, 2), (1.0, 1.0))
    p = tmp_path / "c.csv"
    write_field_csv(p, g, np.array([[1.0, 2.0], [3.0, 4.0]]))
    lines = p.read_text().splitlines()
    assert lines[0] == "x,y,value" and len(lines) == 5
