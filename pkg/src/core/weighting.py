"""
Weighting matrices for the analysis step
Covariance-based (W_C) and gradient-based (W_S) weightings in diagonal and
five-banded form, the banded localization operator and the directional
refinement mask. Five-banded matrices store the main diagonal, the first
super-diagonal and the n_x-th super-diagonal; they are symmetric.
"""
import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from scipy import sparse

from src.core.ensemble import Ensemble, ensemble_mean
from src.core.errors import ParameterError
from src.core.grid import Field2D, Grid2D, flatten_field
from src.core.statistics import (VARIANCE_EPSILON, banded_correlation, gradient_stats,
                                 pointwise_variance)

logger = logging.getLogger(__name__)

FLOOR_FACTOR = 1e-12


@dataclass(frozen=True)
class FiveBands:
    """Main, first and n_x-th diagonals of a symmetric five-banded matrix"""

    main: np.ndarray
    first: np.ndarray
    nx_band: np.ndarray
    n_x: int

    @property
    def size(self) -> int:
        return self.main.size

    def bands(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.main, self.first, self.nx_band

    def to_sparse(self) -> sparse.csr_matrix:
        n, n_x = self.size, self.n_x
        return sparse.diags(
            [self.nx_band, self.first, self.main, self.first, self.nx_band],
            [-n_x, -1, 0, 1, n_x], shape=(n, n), format="csr",
        )

    def entry(self, m: int, m2: int) -> float:
        """Value at 1-based flat indices (m, m2)"""
        lo, offset = min(m, m2) - 1, abs(m - m2)
        if offset == 0:
            return float(self.main[lo])
        if offset == 1:
            return float(self.first[lo])
        if offset == self.n_x:
            return float(self.nx_band[lo])
        return 0.0


class LocalizationMatrix(FiveBands):
    """Five-banded taper: 1 on the diagonal, 0.5 between grid neighbors"""


class RefinementMask(FiveBands):
    """Binary five-banded mask cutting correlations across sharp transitions"""


@dataclass(frozen=True)
class WeightingMatrix:
    """
    Diagonal or symmetric five-banded weighting over flat grid indices

    Attributes:
        main: Main diagonal (strictly positive after regularization)
        first: First super-diagonal, None for a diagonal matrix
        nx_band: n_x-th super-diagonal, None for a diagonal matrix
        n_x: Grid points per column of the flattened grid
        scale: alpha^2 or beta applied during assembly
        scheme: Name of the assembling scheme
    """

    main: np.ndarray
    first: Optional[np.ndarray]
    nx_band: Optional[np.ndarray]
    n_x: int
    scale: float = 1.0
    scheme: str = ""

    @property
    def is_diagonal(self) -> bool:
        return self.first is None

    @property
    def size(self) -> int:
        return self.main.size

    def bands(self) -> FiveBands:
        if self.is_diagonal:
            n = self.size
            return FiveBands(self.main, np.zeros(n - 1), np.zeros(max(n - self.n_x, 0)), self.n_x)
        return FiveBands(self.main, self.first, self.nx_band, self.n_x)

    def to_sparse(self) -> sparse.csr_matrix:
        if self.is_diagonal:
            return sparse.diags(self.main, 0, format="csr")
        return self.bands().to_sparse()

    def restrict(self, indices: np.ndarray) -> sparse.csr_matrix:
        """H W H^T for the selection H of 0-based flat indices"""
        return self.to_sparse()[indices][:, indices]

    def diagonal_part(self) -> "WeightingMatrix":
        return WeightingMatrix(self.main, None, None, self.n_x, self.scale, self.scheme + "[diagonal]")


def regularize(main: np.ndarray) -> np.ndarray:
    """Raise every diagonal entry to at least 1e-12 * max(max(diag), 1)"""
    floor = FLOOR_FACTOR * max(float(np.max(main)), 1.0)
    return np.maximum(main, floor)


def build_localization(grid: Grid2D) -> LocalizationMatrix:
    """
    Banded taper over the flattened grid

    First-band entries (m, m + 1) link neighbours along i inside one grid
    column j; they vanish where m mod n_x == 0 (1-based), the seam between
    two columns. The n_x-th band links neighbours along j.
    """
    n, n_x = grid.size, grid.n_x
    first = np.full(n - 1, 0.5)
    seam = (np.arange(1, n) % n_x) == 0
    first[seam] = 0.0
    return LocalizationMatrix(np.ones(n), first, np.full(n - n_x, 0.5), n_x)


def directional_derivative_fields(prior_mean: Field2D) -> Tuple[np.ndarray, np.ndarray]:
    """One-sided |differences| of the mean: D^x (n_x-1, n_y) and D^y (n_x, n_y-1)"""
    grid = prior_mean.grid
    d_x = np.abs(np.diff(prior_mean.values, axis=0)) / grid.dx
    d_y = np.abs(np.diff(prior_mean.values, axis=1)) / grid.dy
    return d_x, d_y


def build_mask(prior_mean: Field2D, d_thresh: float) -> RefinementMask:
    """
    Binary refinement mask on the localization bands

    D^x gets a zero row appended so that its column-major flattening lines
    up with the first band (the padded entries sit on the column seams);
    the last entry is dropped. D^y flattens directly onto the n_x-th band.
    Entries above d_thresh become 0.
    """
    if d_thresh <= 0:
        raise ParameterError(f"d_thresh must be positive, got {d_thresh!r}")
    grid = prior_mean.grid
    d_x, d_y = directional_derivative_fields(prior_mean)
    padded = np.vstack([d_x, np.zeros((1, grid.n_y))])
    d_x_flat = padded.ravel(order="F")[:-1]
    d_y_flat = d_y.ravel(order="F")
    first = np.where(d_x_flat > d_thresh, 0.0, 1.0)
    nx_band = np.where(d_y_flat > d_thresh, 0.0, 1.0)
    return RefinementMask(np.ones(grid.size), first, nx_band, grid.n_x)


def _check_alpha(alpha: float):
    if alpha < 1:
        raise ParameterError(f"inflation factor must be >= 1, got {alpha!r}")


def assemble_W_C_diag(ens: Ensemble, alpha: float) -> WeightingMatrix:
    """alpha^2 times the pointwise variances on the diagonal"""
    _check_alpha(alpha)
    scale = alpha * alpha
    main = scale * flatten_field(pointwise_variance(ens))
    return WeightingMatrix(regularize(main), None, None, ens.grid.n_x, scale, "cov_diag")


def assemble_W_C_banded(ens: Ensemble, alpha: float, loc: LocalizationMatrix) -> WeightingMatrix:
    """alpha^2 C o T on the five bands, C from variances and Pearson correlations"""
    _check_alpha(alpha)
    scale = alpha * alpha
    variance = flatten_field(pointwise_variance(ens))
    sd = np.sqrt(variance)
    r_first, r_nx = banded_correlation(ens)
    n_x = ens.grid.n_x
    first = scale * sd[:-1] * r_first * sd[1:] * loc.first
    nx_band = scale * sd[:-n_x] * r_nx * sd[n_x:] * loc.nx_band
    main = scale * variance * loc.main
    return WeightingMatrix(regularize(main), first, nx_band, n_x, scale, "cov_banded")


def _gradient_diagonal(ens: Ensemble, theta: float, phi: float, beta_tilde: float) -> Tuple[np.ndarray, float]:
    """Flattened S^D and beta = beta_tilde / max S^D (0 for a flat ensemble)"""
    if beta_tilde <= 0:
        raise ParameterError(f"beta_tilde must be positive, got {beta_tilde!r}")
    s_diag = flatten_field(gradient_stats(ens, theta, phi).s_diag)
    peak = float(np.max(s_diag))
    if peak < VARIANCE_EPSILON:
        logger.warning("gradient statistics vanish (max %.3e); weighting falls to its floor", peak)
        return s_diag, 0.0
    return s_diag, beta_tilde / peak


def assemble_W_S_diag(ens: Ensemble, theta: float, phi: float, beta_tilde: float) -> WeightingMatrix:
    """beta S^D on the diagonal"""
    s_diag, beta = _gradient_diagonal(ens, theta, phi, beta_tilde)
    return WeightingMatrix(regularize(beta * s_diag), None, None, ens.grid.n_x, beta, "grad_diag")


def assemble_W_S_banded(ens: Ensemble, theta: float, phi: float, beta_tilde: float,
                        loc: LocalizationMatrix, mask: Optional[RefinementMask] = None) -> WeightingMatrix:
    """beta S o T (o M when a mask is given) on the five bands"""
    s_diag, beta = _gradient_diagonal(ens, theta, phi, beta_tilde)
    root = np.sqrt(s_diag)
    r_first, r_nx = banded_correlation(ens)
    n_x = ens.grid.n_x
    first = beta * root[:-1] * r_first * root[1:] * loc.first
    nx_band = beta * root[:-n_x] * r_nx * root[n_x:] * loc.nx_band
    scheme = "grad_banded"
    if mask is not None:
        first = first * mask.first
        nx_band = nx_band * mask.nx_band
        scheme = "grad_banded_masked"
    main = beta * s_diag * loc.main
    return WeightingMatrix(regularize(main), first, nx_band, n_x, beta, scheme)


def write_banded_csv(W: WeightingMatrix, path: Union[str, Path]):
    """Dump stored entries as (band, index, value) rows, index 1-based"""
    bands = W.bands()
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["band", "index", "value"])
        for offset, values in ((0, bands.main), (1, bands.first), (W.n_x, bands.nx_band)):
            for m, value in enumerate(values, start=1):
                writer.writerow([offset, m, repr(float(value))])


SCHEMES = ("cov_diag", "cov_banded", "grad_diag", "grad_banded")


@dataclass(frozen=True)
class WeightingScheme:
    """
    Which weighting the analysis uses and its parameters

    Attributes:
        kind: One of SCHEMES
        alpha: Inflation factor of the covariance schemes
        theta: Moment parameter of the gradient schemes
        phi: Aggregation parameter of the gradient schemes
        beta_tilde: Target magnitude of the gradient weighting
        mask: Apply the directional refinement mask (grad_banded only)
        d_thresh: Threshold of the refinement mask
        ensemble_inflation: Inflation of the deviations entering the
            transform for gradient schemes; None leaves them untouched
    """

    kind: str = "cov_diag"
    alpha: float = 4.0
    theta: float = 1.0
    phi: float = 1.0
    beta_tilde: float = 1e-3
    mask: bool = False
    d_thresh: float = 4.0
    ensemble_inflation: Optional[float] = None

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise ParameterError(f"unknown weighting scheme {self.kind!r}, expected one of {SCHEMES}")
        if not self.alpha >= 1:
            raise ParameterError(f"alpha must be >= 1, got {self.alpha!r}")
        if not (self.theta > 0 and self.phi > 0):
            raise ParameterError(f"theta and phi must be positive, got theta={self.theta!r}, phi={self.phi!r}")
        if not self.beta_tilde > 0:
            raise ParameterError(f"beta_tilde must be positive, got {self.beta_tilde!r}")
        if not self.d_thresh > 0:
            raise ParameterError(f"d_thresh must be positive, got {self.d_thresh!r}")
        if self.ensemble_inflation is not None and not self.ensemble_inflation >= 1:
            raise ParameterError(f"ensemble_inflation must be >= 1, got {self.ensemble_inflation!r}")

    @property
    def is_covariance(self) -> bool:
        return self.kind.startswith("cov")

    @property
    def label(self) -> str:
        if self.is_covariance:
            return f"{self.kind}(alpha={self.alpha:g})"
        extra = f", mask, d_thresh={self.d_thresh:g}" if self.kind == "grad_banded" and self.mask else ""
        return f"{self.kind}(theta={self.theta:g}, phi={self.phi:g}, beta_tilde={self.beta_tilde:g}{extra})"

    def transform_inflation(self) -> float:
        """Inflation applied to the deviations used by the ensemble transform"""
        if self.is_covariance:
            return self.alpha
        return 1.0 if self.ensemble_inflation is None else self.ensemble_inflation


def assemble_weighting(scheme: WeightingScheme, ens: Ensemble) -> WeightingMatrix:
    """Build the weighting matrix named by scheme from the forecast ensemble"""
    if scheme.kind == "cov_diag":
        return assemble_W_C_diag(ens, scheme.alpha)
    if scheme.kind == "cov_banded":
        return assemble_W_C_banded(ens, scheme.alpha, build_localization(ens.grid))
    if scheme.kind == "grad_diag":
        return assemble_W_S_diag(ens, scheme.theta, scheme.phi, scheme.beta_tilde)
    mask = None
    if scheme.mask:
        mask = build_mask(ensemble_mean(ens), scheme.d_thresh)
    return assemble_W_S_banded(ens, scheme.theta, scheme.phi, scheme.beta_tilde,
                               build_localization(ens.grid), mask)
