import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.core.errors import GridError
from src.core.grid import (Field2D, Grid2D, central_diff, field_from_bytes, field_to_bytes, flatten,
                           flatten_field, fold_seam, read_field, read_field_csv, seam_gap, unflatten,
                           unflatten_field, write_field, write_field_csv)


def test_flatten_examples():
    grid = Grid2D(0.0, 1.0, 0.0, 1.0, 101, 7)
    assert flatten(1, 1, grid) == 1
    assert flatten(3, 2, grid) == 104
    assert flatten(101, 7, grid) == grid.size


def test_flatten_rejects_out_of_range(small_grid):
    with pytest.raises(GridError):
        flatten(0, 1, small_grid)
    with pytest.raises(GridError):
        flatten(1, small_grid.n_y + 1, small_grid)
    with pytest.raises(GridError):
        unflatten(small_grid.size + 1, small_grid)


def test_unflatten_inverts_flatten(small_grid):
    for j in range(1, small_grid.n_y + 1):
        for i in range(1, small_grid.n_x + 1):
            assert unflatten(flatten(i, j, small_grid), small_grid) == (i, j)


def test_flatten_field_is_column_major(small_grid, rng):
    f = Field2D(small_grid, rng.normal(size=small_grid.shape))
    v = flatten_field(f)
    for j in range(1, small_grid.n_y + 1):
        for i in range(1, small_grid.n_x + 1):
            assert v[flatten(i, j, small_grid) - 1] == f.values[i - 1, j - 1]
    # first column of the grid comes first
    assert_array_equal(v[:small_grid.n_x], f.values[:, 0])


def test_flatten_field_constant_and_round_trip(small_grid, rng):
    assert_array_equal(flatten_field(Field2D.constant(small_grid, 2.5)), np.full(small_grid.size, 2.5))
    f = Field2D(small_grid, rng.normal(size=small_grid.shape))
    assert_array_equal(unflatten_field(flatten_field(f), small_grid).values, f.values)


def test_unflatten_field_rejects_wrong_length(small_grid):
    with pytest.raises(GridError):
        unflatten_field(np.zeros(small_grid.size + 1), small_grid)


def test_grid_validation():
    with pytest.raises(GridError):
        Grid2D(0.0, 1.0, 0.0, 1.0, 2, 5)
    with pytest.raises(GridError):
        Grid2D(1.0, 0.0, 0.0, 1.0, 5, 5)


def test_coordinates_and_spacing():
    grid = Grid2D(-1.0, 1.0, 0.0, 3.0, 5, 4)
    assert grid.dx == pytest.approx(0.5)
    assert grid.dy == pytest.approx(1.0)
    X, Y = grid.coordinates()
    assert X.shape == grid.shape
    assert_allclose(X[:, 0], [-1.0, -0.5, 0.0, 0.5, 1.0])
    assert_allclose(Y[0, :], [0.0, 1.0, 2.0, 3.0])


def test_refine_keeps_coarse_points():
    grid = Grid2D.unit_square(11)
    fine = grid.refine(4)
    assert fine.shape == (41, 41)
    assert fine.closed
    assert_allclose(fine.x[::4], grid.x)
    with pytest.raises(GridError):
        grid.refine(2.5)


def test_field_rejects_non_finite_and_is_read_only(small_grid):
    values = np.zeros(small_grid.shape)
    values[1, 1] = np.nan
    with pytest.raises(GridError):
        Field2D(small_grid, values)
    f = Field2D.constant(small_grid, 1.0)
    with pytest.raises(ValueError):
        f.values[0, 0] = 2.0


def test_central_diff_constant_is_zero(small_grid):
    d = central_diff(Field2D.constant(small_grid, 3.0), "x")
    assert_array_equal(d.values, 0.0)


def test_central_diff_exact_on_ramp_interior():
    grid = Grid2D(0.0, 1.0, 0.0, 1.0, 6, 4)
    X, _ = grid.coordinates()
    d = central_diff(Field2D(grid, X), "x")
    assert_allclose(d.values[1:-1, :], 1.0, atol=1e-12)
    assert_allclose(central_diff(Field2D(grid, X), "y").values, 0.0, atol=1e-12)


def test_central_diff_single_jump():
    grid = Grid2D(0.0, 1.0, 0.0, 1.0, 6, 4)
    h = 0.7
    values = np.zeros(grid.shape)
    values[3:, :] = h
    d = central_diff(Field2D(grid, values), "x").values
    expected = h / (2 * grid.dx)
    assert_allclose(d[2], expected)
    assert_allclose(d[3], expected)
    assert_array_equal(d[1], 0.0)
    assert_array_equal(d[4], 0.0)


def test_central_diff_closed_grid_wraps_on_ring():
    grid = Grid2D.unit_square(33)
    X, Y = grid.coordinates()
    f = Field2D(grid, np.sin(2 * np.pi * X))
    d = central_diff(f, "x").values
    assert_allclose(d[-1], d[0])
    assert_allclose(d, 2 * np.pi * np.cos(2 * np.pi * X), atol=0.1)


def test_fold_seam_averages_duplicated_lines():
    grid = Grid2D.unit_square(4)
    values = np.arange(16.0).reshape(4, 4)
    assert seam_gap(values, grid) == 12.0
    folded = fold_seam(values, grid)
    assert seam_gap(folded, grid) == 0.0
    assert folded[0, 0] == pytest.approx((0.0 + 3.0 + 12.0 + 15.0) / 4)
    assert folded[0, 1] == pytest.approx((1.0 + 13.0) / 2)
    assert folded[1, 0] == pytest.approx((4.0 + 7.0) / 2)
    assert folded[1, 1] == values[1, 1]
    assert_array_equal(folded[-1, :], folded[0, :])
    assert_array_equal(folded[:, -1], folded[:, 0])


def test_fold_seam_keeps_periodic_and_open_fields(small_grid, rng):
    grid = Grid2D.unit_square(6)
    ring = rng.normal(size=(2, 5, 5))
    periodic = np.pad(ring, [(0, 0), (0, 1), (0, 1)], mode="wrap")
    assert_allclose(fold_seam(periodic, grid), periodic, rtol=1e-15)
    values = rng.normal(size=small_grid.shape)
    assert fold_seam(values, small_grid) is values
    assert seam_gap(values, small_grid) == 0.0


def test_binary_field_format(tmp_path, small_grid, rng):
    f = Field2D(small_grid, rng.normal(size=small_grid.shape))
    payload = field_to_bytes(f)
    assert len(payload) == 16 + 8 * small_grid.size
    assert np.frombuffer(payload[:16], dtype="<u8").tolist() == [4, 3]
    assert_array_equal(np.frombuffer(payload[16:], dtype="<f8"), flatten_field(f))

    path = tmp_path / "u.field"
    write_field(f, path)
    assert_array_equal(read_field(path, small_grid).values, f.values)


def test_binary_field_rejects_mismatch(small_grid):
    f = Field2D.constant(small_grid, 1.0)
    other = Grid2D(0.0, 1.0, 0.0, 1.0, 3, 4)
    with pytest.raises(GridError):
        field_from_bytes(field_to_bytes(f), other)
    with pytest.raises(GridError):
        field_from_bytes(field_to_bytes(f)[:-8], small_grid)


def test_csv_field_format(tmp_path, small_grid, rng):
    f = Field2D(small_grid, rng.normal(size=small_grid.shape))
    path = tmp_path / "u.csv"
    write_field_csv(f, path)
    rows = path.read_text().strip().splitlines()
    assert len(rows) == small_grid.n_y
    assert len(rows[0].split(",")) == small_grid.n_x
    assert_array_equal(read_field_csv(path, small_grid).values, f.values)
