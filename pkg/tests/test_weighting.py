import csv

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.core.ensemble import Ensemble, center, ensemble_mean
from src.core.errors import ParameterError
from src.core.grid import Field2D, Grid2D, flatten, flatten_field, unflatten
from src.core.statistics import correlation_matrix, directional_discrepancy, gradient_stats
from src.core.weighting import (FiveBands, LocalizationMatrix, RefinementMask, WeightingScheme, assemble_W_C_banded,
                                assemble_W_C_diag, assemble_W_S_banded, assemble_W_S_diag, assemble_weighting,
                                build_localization, build_mask, directional_derivative_fields, regularize, write_banded_csv)


def brute_localization(grid: Grid2D) -> np.ndarray:
    n, n_x = grid.size, grid.n_x
    T = np.zeros((n, n))
    for m in range(1, n + 1):
        for m2 in range(1, n + 1):
            lo = min(m, m2)
            if m == m2:
                T[m - 1, m2 - 1] = 1.0
            elif abs(m - m2) == 1 and lo % n_x != 0:
                T[m - 1, m2 - 1] = 0.5
            elif abs(m - m2) == n_x:
                T[m - 1, m2 - 1] = 0.5
    return T


def brute_mask(mean: Field2D, d_thresh: float) -> np.ndarray:
    grid = mean.grid
    n, n_x = grid.size, grid.n_x
    M = np.zeros((n, n))
    for m in range(1, n + 1):
        M[m - 1, m - 1] = 1.0
        for offset in (1, n_x):
            m2 = m + offset
            if m2 > n:
                continue
            if offset == 1 and m % n_x == 0:
                value = 1.0
            else:
                value = 0.0 if directional_discrepancy(mean, m, m2) > d_thresh else 1.0
            M[m - 1, m2 - 1] = M[m2 - 1, m - 1] = value
    return M


def band_pattern(n: int, n_x: int) -> np.ndarray:
    offsets = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    return (offsets == 0) | (offsets == 1) | (offsets == n_x)


def test_localization_entries():
    grid = Grid2D(0.0, 1.0, 0.0, 1.0, 5, 4)
    T = build_localization(grid)
    assert T.entry(7, 7) == 1.0
    assert T.entry(5, 6) == 0.0
    assert T.entry(6, 5) == 0.0
    assert T.entry(6, 7) == 0.5
    assert T.entry(3, 3 + grid.n_x) == 0.5
    assert T.entry(1, 3) == 0.0


def test_localization_matches_brute_force():
    grid = Grid2D(0.0, 1.0, 0.0, 1.0, 5, 5)
    dense = build_localization(grid).to_sparse().toarray()
    assert_array_equal(dense, brute_localization(grid))
    assert_array_equal(dense, dense.T)


def test_directional_derivative_fields():
    grid = Grid2D(0.0, 1.0, 0.0, 1.0, 4, 3)
    d_x, d_y = directional_derivative_fields(Field2D.constant(grid, 2.0))
    assert d_x.shape == (3, 3) and d_y.shape == (4, 2)
    assert_array_equal(d_x, 0.0)
    assert_array_equal(d_y, 0.0)

    X, _ = grid.coordinates()
    d_x, d_y = directional_derivative_fields(Field2D(grid, X))
    assert_allclose(d_x, 1.0, atol=1e-12)
    assert_array_equal(d_y, 0.0)


def test_directional_derivative_fields_match_loops(rng):
    grid = Grid2D(0.0, 1.0, 0.0, 1.0, 4, 3)
    v = rng.normal(size=grid.shape)
    d_x, d_y = directional_derivative_fields(Field2D(grid, v))
    for i in range(grid.n_x - 1):
        for j in range(grid.n_y):
            assert d_x[i, j] == abs(v[i + 1, j] - v[i, j]) / grid.dx
    for i in range(grid.n_x):
        for j in range(grid.n_y - 1):
            assert d_y[i, j] == abs(v[i, j + 1] - v[i, j]) / grid.dy


def test_mask_of_constant_mean_is_all_ones():
    grid = Grid2D(0.0, 1.0, 0.0, 1.0, 5, 5)
    M = build_mask(Field2D.constant(grid, 1.0), 4.0)
    assert_array_equal(M.first, 1.0)
    assert_array_equal(M.nx_band, 1.0)
    assert_array_equal(M.main, 1.0)


def test_mask_single_jump():
    grid = Grid2D(0.0, 1.0, 0.0, 1.0, 5, 5)
    values = np.zeros(grid.shape)
    values[2:, 1] = 4.0 * grid.dx * 1.1
    values[2:, 3] = 4.0 * grid.dx * 0.9
    M = build_mask(Field2D(grid, values), 4.0)
    # jump between i = 2 and i = 3 in row j = 2 exceeds the threshold, in row j = 4 it does not
    assert M.entry(flatten(2, 2, grid), flatten(3, 2, grid)) == 0.0
    assert M.entry(flatten(2, 4, grid), flatten(3, 4, grid)) == 1.0


def test_mask_and_localization_match_pairwise_construction(rng):
    grid = Grid2D(0.0, 1.0, 0.0, 1.0, 5, 5)
    mean = Field2D(grid, rng.normal(size=grid.shape))
    M = build_mask(mean, 4.0).to_sparse().toarray()
    expected = brute_mask(mean, 4.0)
    assert_array_equal(M, expected)
    assert 0.0 < np.mean(expected[band_pattern(grid.size, grid.n_x)]) < 1.0
    T = build_localization(grid).to_sparse().toarray()
    assert_array_equal(T * M, brute_localization(grid) * expected)


def test_build_mask_rejects_bad_threshold(small_grid):
    with pytest.raises(ParameterError):
        build_mask(Field2D.constant(small_grid, 0.0), 0.0)


def test_regularize_floor():
    assert_array_equal(regularize(np.zeros(3)), 1e-12)
    main = np.array([0.0, 5.0])
    assert_array_equal(regularize(main), [5e-12, 5.0])


def test_W_C_diag(small_grid, random_ensemble):
    u = Field2D.constant(small_grid, 1.0)
    W = assemble_W_C_diag(Ensemble.from_members([u, u]), 1.0)
    assert W.is_diagonal
    assert_array_equal(W.main, 1e-12)

    ens = random_ensemble(small_grid, 5)
    X = center(ens).deviations
    assert_allclose(assemble_W_C_diag(ens, 2.0).main, 4.0 * np.sum(X * X, axis=1), rtol=1e-12)
    assert assemble_W_C_diag(ens, 2.0).scale == 4.0
    with pytest.raises(ParameterError):
        assemble_W_C_diag(ens, 0.5)


def test_W_C_banded_matches_dense(random_ensemble):
    grid = Grid2D(0.0, 1.0, 0.0, 1.0, 4, 4)
    ens = random_ensemble(grid, 6)
    C = center(ens).covariance()
    T = brute_localization(grid)
    W = assemble_W_C_banded(ens, 4.0, build_localization(grid))
    assert_allclose(W.to_sparse().toarray(), 16.0 * C * T, rtol=1e-12, atol=1e-14)
    assert_allclose(W.main, assemble_W_C_diag(ens, 4.0).main, rtol=1e-12)


def test_W_C_banded_identical_members_is_floor(small_grid):
    u = Field2D.constant(small_grid, 1.0)
    W = assemble_W_C_banded(Ensemble.from_members([u, u, u]), 4.0, build_localization(small_grid))
    assert_array_equal(W.first, 0.0)
    assert_array_equal(W.nx_band, 0.0)
    assert_array_equal(W.main, 1e-12)


def test_W_S_diag_scaling():
    grid = Grid2D(0.0, 1.0, 0.0, 1.0, 6, 4)
    values = np.zeros(grid.shape)
    values[3:, :] = 0.8
    u = Field2D(grid, values)
    ens = Ensemble.from_members([u, u])
    assert np.max(gradient_stats(ens, 1.0, 1.0).s_diag.values) == pytest.approx(2.0)
    W = assemble_W_S_diag(ens, 1.0, 1.0, 1e-3)
    assert W.scale == pytest.approx(5e-4)
    assert np.max(W.main) == pytest.approx(1e-3)


def test_W_S_diag_of_constant_ensemble_is_floor(small_grid):
    u = Field2D.constant(small_grid, 1.0)
    W = assemble_W_S_diag(Ensemble.from_members([u, u]), 1.0, 1.0, 1e-3)
    assert W.scale == 0.0
    assert_array_equal(W.main, 1e-12)
    with pytest.raises(ParameterError):
        assemble_W_S_diag(Ensemble.from_members([u, u]), 1.0, 1.0, 0.0)


def test_W_S_banded_matches_dense(rng, random_ensemble):
    grid = Grid2D(0.0, 1.0, 0.0, 1.0, 4, 4)
    ens = random_ensemble(grid, 6)
    s = flatten_field(gradient_stats(ens, 1.0, 1.0).s_diag)
    beta = 1e-3 / s.max()
    S = np.sqrt(np.outer(s, s)) * correlation_matrix(ens).values
    T = brute_localization(grid)
    mean = Field2D(grid, rng.normal(size=grid.shape))
    M = build_mask(mean, 4.0)
    loc = build_localization(grid)

    plain = assemble_W_S_banded(ens, 1.0, 1.0, 1e-3, loc)
    assert_allclose(plain.to_sparse().toarray(), beta * S * T, rtol=1e-12, atol=1e-16)
    masked = assemble_W_S_banded(ens, 1.0, 1.0, 1e-3, loc, M)
    assert_allclose(masked.to_sparse().toarray(), beta * S * T * M.to_sparse().toarray(), rtol=1e-12, atol=1e-16)
    assert masked.scheme == "grad_banded_masked"


def test_W_S_banded_with_all_ones_mask_equals_unmasked(small_grid, random_ensemble):
    ens = random_ensemble(small_grid, 5)
    loc = build_localization(small_grid)
    n = small_grid.size
    ones = RefinementMask(np.ones(n), np.ones(n - 1), np.ones(n - small_grid.n_x), small_grid.n_x)
    plain = assemble_W_S_banded(ens, 1.0, 1.0, 1e-3, loc)
    masked = assemble_W_S_banded(ens, 1.0, 1.0, 1e-3, loc, ones)
    assert_array_equal(plain.first, masked.first)
    assert_array_equal(plain.nx_band, masked.nx_band)
    # seams of the localization stay zero
    seams = np.arange(1, n) % small_grid.n_x == 0
    assert_array_equal(plain.first[seams], 0.0)


def test_weighting_matrix_helpers(small_grid, random_ensemble):
    ens = random_ensemble(small_grid, 5)
    W = assemble_W_C_banded(ens, 1.0, build_localization(small_grid))
    idx = np.array([0, 2, 5, 7])
    dense = W.to_sparse().toarray()
    assert_allclose(W.restrict(idx).toarray(), dense[np.ix_(idx, idx)])
    diag = W.diagonal_part()
    assert diag.is_diagonal
    assert_array_equal(diag.to_sparse().toarray(), np.diag(W.main))
    bands = W.bands()
    assert isinstance(bands, FiveBands)
    assert bands.entry(1, 2) == dense[0, 1]


def test_write_banded_csv(tmp_path, small_grid, random_ensemble):
    W = assemble_W_C_banded(random_ensemble(small_grid, 4), 1.0, build_localization(small_grid))
    path = tmp_path / "w.csv"
    write_banded_csv(W, path)
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["band", "index", "value"]
    n = small_grid.size
    assert len(rows) - 1 == n + (n - 1) + (n - small_grid.n_x)
    assert rows[1] == ["0", "1", repr(float(W.main[0]))]


def test_weighting_scheme_dispatch(small_grid, random_ensemble):
    ens = random_ensemble(small_grid, 5)
    assert assemble_weighting(WeightingScheme("cov_diag", alpha=2.0), ens).scheme == "cov_diag"
    assert assemble_weighting(WeightingScheme("cov_banded"), ens).scheme == "cov_banded"
    assert assemble_weighting(WeightingScheme("grad_diag"), ens).scheme == "grad_diag"
    assert assemble_weighting(WeightingScheme("grad_banded"), ens).scheme == "grad_banded"
    masked = WeightingScheme("grad_banded", mask=True, d_thresh=4.0)
    assert assemble_weighting(masked, ens).scheme == "grad_banded_masked"
    expected_mask = build_mask(ensemble_mean(ens), 4.0)
    W = assemble_weighting(masked, ens)
    assert_array_equal(W.first[expected_mask.first == 0.0], 0.0)


def test_weighting_scheme_inflation_and_validation():
    assert WeightingScheme("cov_diag", alpha=4.0).transform_inflation() == 4.0
    assert WeightingScheme("grad_diag").transform_inflation() == 1.0
    assert WeightingScheme("grad_diag", ensemble_inflation=1.2).transform_inflation() == 1.2
    assert "theta=1" in WeightingScheme("grad_diag").label
    with pytest.raises(ParameterError):
        WeightingScheme("full_dense")


@pytest.mark.parametrize("params", [
    {"alpha": 0.99},
    {"theta": 0.0},
    {"phi": 0.0},
    {"beta_tilde": 0.0},
    {"beta_tilde": -1.0},
    {"d_thresh": -4.0},
    {"ensemble_inflation": 0.5},
    {"alpha": float("nan")},
])
def test_weighting_scheme_rejects_bad_parameters(params):
    with pytest.raises(ParameterError):
        WeightingScheme("grad_banded", **params)


def test_unflatten_consistency_with_bands():
    grid = Grid2D(0.0, 1.0, 0.0, 1.0, 3, 4)
    T = build_localization(grid)
    for m in range(1, grid.size):
        i, _ = unflatten(m, grid)
        assert (T.entry(m, m + 1) == 0.0) == (i == grid.n_x)


def test_localization_bands_tuple():
    grid = Grid2D(0.0, 1.0, 0.0, 1.0, 4, 3)
    main, first, nx_band = build_localization(grid).bands()
    assert main.size == 12 and first.size == 11 and nx_band.size == 8
    assert_array_equal(nx_band, 0.5)


def test_W_S_banded_mask_and_taper_commute(rng, random_ensemble):
    grid = Grid2D(0.0, 1.0, 0.0, 1.0, 5, 5)
    ens = random_ensemble(grid, 6)
    loc = build_localization(grid)
    M = build_mask(Field2D(grid, rng.normal(size=grid.shape)), 4.0)
    assert np.any(M.first == 0.0) or np.any(M.nx_band == 0.0)
    masked = assemble_W_S_banded(ens, 1.0, 1.0, 1e-3, loc, M)
    premasked_taper = LocalizationMatrix(loc.main, loc.first * M.first, loc.nx_band * M.nx_band, grid.n_x)
    folded = assemble_W_S_banded(ens, 1.0, 1.0, 1e-3, premasked_taper)
    assert_array_equal(masked.main, folded.main)
    assert_array_equal(masked.first, folded.first)
    assert_array_equal(masked.nx_band, folded.nx_band)

    s = flatten_field(gradient_stats(ens, 1.0, 1.0).s_diag)
    S = 1e-3 / s.max() * np.sqrt(np.outer(s, s)) * correlation_matrix(ens).values
    mask_first = S * M.to_sparse().toarray() * brute_localization(grid)
    assert_allclose(masked.to_sparse().toarray(), mask_first, rtol=1e-12, atol=1e-16)


def test_mask_ignores_a_common_offset(rng):
    grid = Grid2D(0.0, 1.0, 0.0, 1.0, 5, 5)
    # integer values keep the one-sided differences exact under the offset
    values = rng.integers(-3, 4, size=grid.shape).astype(np.float64)
    base = build_mask(Field2D(grid, values), 4.0)
    shifted = build_mask(Field2D(grid, values + 10.0), 4.0)
    assert np.any(base.first == 0.0) or np.any(base.nx_band == 0.0)
    assert_array_equal(shifted.first, base.first)
    assert_array_equal(shifted.nx_band, base.nx_band)
