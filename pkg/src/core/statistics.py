"""
Ensemble second-moment statistics
Pointwise variance, Pearson correlations (dense at test scale, banded in
production), gradient statistics and the structurally-aware correlation
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.core.ensemble import Ensemble, center
from src.core.errors import ParameterError
from src.core.grid import Field2D, central_diff_values, flatten_field, unflatten

logger = logging.getLogger(__name__)

VARIANCE_EPSILON = 1e-14
DENSE_LIMIT = 4096


@dataclass(frozen=True)
class GradientStats:
    """Directional statistics s_x, s_y and their aggregate s_diag = s_x^phi + s_y^phi"""

    s_x: Field2D
    s_y: Field2D
    s_diag: Field2D
    theta: float
    phi: float


@dataclass(frozen=True)
class CorrelationMatrix:
    """Dense symmetric correlation matrix over flat indices (0-based storage)"""

    values: np.ndarray

    def __post_init__(self):
        n = self.values.shape[0]
        if self.values.shape != (n, n):
            raise ParameterError(f"correlation matrix must be square, got {self.values.shape}")

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def entry(self, m: int, m2: int) -> float:
        """Entry for 1-based flat indices"""
        return float(self.values[m - 1, m2 - 1])


def pointwise_variance(ens: Ensemble) -> Field2D:
    """Sample variance over members with 1/(K-1) normalization"""
    return Field2D(ens.grid, np.var(ens.values, axis=0, ddof=1))


def pearson_entry(ens: Ensemble, m: int, m2: int) -> float:
    """
    Sample Pearson correlation between flat components m and m2 (1-based)

    A component whose sample variance is below VARIANCE_EPSILON has
    correlation 0 with every other component and 1 with itself.
    """
    unflatten(m, ens.grid)
    unflatten(m2, ens.grid)
    flat = ens.flat_members()
    a = flat[m - 1] - np.mean(flat[m - 1])
    b = flat[m2 - 1] - np.mean(flat[m2 - 1])
    var_a = np.sum(a * a) / (ens.K - 1)
    var_b = np.sum(b * b) / (ens.K - 1)
    if m == m2:
        return 1.0
    if var_a < VARIANCE_EPSILON or var_b < VARIANCE_EPSILON:
        return 0.0
    r = (np.sum(a * b) / (ens.K - 1)) / (np.sqrt(var_a) * np.sqrt(var_b))
    return float(np.clip(r, -1.0, 1.0))


def correlation_matrix(ens: Ensemble) -> CorrelationMatrix:
    """Dense Pearson correlation matrix (grids with at most 4096 points)"""
    n = ens.grid.size
    if n > DENSE_LIMIT:
        raise ParameterError(f"dense correlation is limited to {DENSE_LIMIT} grid points, got {n}")
    X = center(ens).deviations
    variance = np.sum(X * X, axis=1)
    live = variance >= VARIANCE_EPSILON
    std = np.where(live, np.sqrt(variance), 1.0)
    R = (X @ X.T) / np.outer(std, std)
    R[~live, :] = 0.0
    R[:, ~live] = 0.0
    R = np.clip(0.5 * (R + R.T), -1.0, 1.0)
    np.fill_diagonal(R, 1.0)
    return CorrelationMatrix(R)


def banded_correlation(ens: Ensemble) -> Tuple[np.ndarray, np.ndarray]:
    """
    Pearson entries on the two stored super-diagonals only

    Returns:
        (first, nx): correlations of flat components (m, m+1) and (m, m+n_x)
    """
    X = center(ens).deviations
    n_x = ens.grid.n_x
    variance = np.sum(X * X, axis=1)
    live = variance >= VARIANCE_EPSILON
    std = np.where(live, np.sqrt(variance), 1.0)

    def band(offset: int) -> np.ndarray:
        num = np.sum(X[:-offset] * X[offset:], axis=1)
        r = num / (std[:-offset] * std[offset:])
        r[~(live[:-offset] & live[offset:])] = 0.0
        return np.clip(r, -1.0, 1.0)

    return band(1), band(n_x)


def gradient_stats(ens: Ensemble, theta: float, phi: float) -> GradientStats:
    """
    Ensemble gradient statistics

    s_x[i, j] = (1/K) sum_k |d_x v_k[i, j]|^theta with periodic central
    differences, likewise s_y; s_diag = s_x^phi + s_y^phi.
    """
    if theta <= 0 or phi <= 0:
        raise ParameterError(f"theta and phi must be positive, got theta={theta!r}, phi={phi!r}")
    grid = ens.grid
    s_x = np.mean(np.abs(central_diff_values(ens.values, grid, "x")) ** theta, axis=0)
    s_y = np.mean(np.abs(central_diff_values(ens.values, grid, "y")) ** theta, axis=0)
    s_diag = s_x ** phi + s_y ** phi
    return GradientStats(Field2D(grid, s_x), Field2D(grid, s_y), Field2D(grid, s_diag), theta, phi)


def flat_coordinates(field: Field2D) -> Tuple[np.ndarray, np.ndarray]:
    """x and y coordinate of every flat index"""
    X, Y = field.grid.coordinates()
    return X.ravel(order="F"), Y.ravel(order="F")


def directional_discrepancy(prior_mean: Field2D, m: int, m2: int) -> float:
    """|mean_m - mean_m2| / ||x_m - x_m2|| for 1-based flat indices m != m2"""
    if m == m2:
        raise ParameterError("directional discrepancy is undefined for a point with itself")
    i, j = unflatten(m, prior_mean.grid)
    i2, j2 = unflatten(m2, prior_mean.grid)
    grid = prior_mean.grid
    distance = np.hypot(grid.x[i - 1] - grid.x[i2 - 1], grid.y[j - 1] - grid.y[j2 - 1])
    return float(abs(prior_mean.values[i - 1, j - 1] - prior_mean.values[i2 - 1, j2 - 1]) / distance)


def structural_correlation(R: CorrelationMatrix, prior_mean: Field2D, d_thresh: float) -> CorrelationMatrix:
    """Zero every off-diagonal entry whose directional discrepancy exceeds d_thresh"""
    if d_thresh <= 0:
        raise ParameterError(f"d_thresh must be positive, got {d_thresh!r}")
    if R.size != prior_mean.grid.size:
        raise ParameterError(f"correlation of size {R.size} does not match grid of {prior_mean.grid.size} points")
    mean = flatten_field(prior_mean)
    x, y = flat_coordinates(prior_mean)
    distance = np.hypot(x[:, None] - x[None, :], y[:, None] - y[None, :])
    np.fill_diagonal(distance, 1.0)
    discrepancy = np.abs(mean[:, None] - mean[None, :]) / distance
    refined = np.where(discrepancy > d_thresh, 0.0, R.values)
    np.fill_diagonal(refined, 1.0)
    return CorrelationMatrix(refined)
