import numpy as np
import pytest

from dedem.errors import FieldTableError
from dedem.fields import FieldTable, export_field, load_reference_field


def test_empty_table_exports_header_only(tmp_path):
    table = FieldTable(points=np.zeros((0, 2)), columns={"u1": [], "u2": []})
    destination = tmp_path / "empty.csv"

    export_field(table, destination)

    assert destination.read_text().splitlines() == ["x1,x2,u1,u2"]


def test_round_trip(tmp_path):
    table = FieldTable(
        points=[[0.1, 0.2], [0.3, -0.4]],
        columns={"u1": [1e-5, -2.5e-7], "sigma22": [10.0 / 3.0, 0.0]},
    )
    destination = tmp_path / "field.csv"

    export_field(table, destination)
    loaded = load_reference_field(destination)

    assert len(destination.read_text().splitlines()) == 3
    assert loaded.names == ["u1", "sigma22"]
    np.testing.assert_allclose(loaded.points, table.points, rtol=0, atol=1e-12)
    np.testing.assert_allclose(loaded["sigma22"], table["sigma22"], rtol=0, atol=1e-12)


def test_nan_is_refused(tmp_path):
    table = FieldTable(points=[[0.0, 0.0]], columns={"u1": [np.nan]})

    with pytest.raises(FieldTableError) as exc_info:
        export_field(table, tmp_path / "nan.csv")

    assert "'u1'" in str(exc_info.value)


def test_missing_coordinate_column(tmp_path):
    source = tmp_path / "ref.csv"
    source.write_text("x1,u1\n0.0,1.0\n")

    with pytest.raises(FieldTableError) as exc_info:
        load_reference_field(source)

    assert "x2" in str(exc_info.value)


def test_ragged_row(tmp_path):
    source = tmp_path / "ref.csv"
    source.write_text("x1,x2,u1\n0.0,0.0,1.0\n0.5,0.5\n")

    with pytest.raises(FieldTableError) as exc_info:
        load_reference_field(source)

    assert "ragged row at line 3" in str(exc_info.value)


def test_three_value_columns(tmp_path):
    source = tmp_path / "ref.csv"
    source.write_text("x1,x2,a,b,c\n0,0,1,2,3\n1,0,4,5,6\n")

    table = load_reference_field(source)

    assert table.names == ["a", "b", "c"]
    np.testing.assert_array_equal(table["c"], [3.0, 6.0])
    np.testing.assert_array_equal(table["x1"], [0.0, 1.0])


def test_columns_must_match_rows():
    with pytest.raises(ValueError):
        FieldTable(points=[[0.0, 0.0], [1.0, 1.0]], columns={"u1": [1.0]})


def test_coordinate_names_are_reserved():
    with pytest.raises(ValueError):
        FieldTable(points=[[0.0, 0.0]], columns={"x1": [1.0]})
