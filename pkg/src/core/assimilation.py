"""
Observation model and ETKF analysis step
The posterior mean solves the weighted least-squares problem through the
gain form with the scheme's weighting matrix; the posterior ensemble comes
from the symmetric square root of the ensemble transform operator.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from numpy.linalg import LinAlgError
from scipy import sparse

from src.core.ensemble import (CenteredEnsemble, Ensemble, center, from_flat_members,
                               inflate, spread)
from src.core.errors import FactorizationError, GridError, ParameterError
from src.core.grid import Field2D, Grid2D, flatten_field, fold_seam, seam_gap, unflatten_field
from src.core.weighting import WeightingMatrix, WeightingScheme, assemble_weighting
from src.utils.banded import BandedCholesky
from src.utils.rng import RngStream

logger = logging.getLogger(__name__)

EIGENVALUE_FLOOR = 1e-14
SYMMETRY_TOLERANCE = 1e-10
PATTERNS = ("dense", "checkerboard")


def dense_indices(grid: Grid2D) -> np.ndarray:
    return np.arange(grid.size)


def checkerboard_indices(grid: Grid2D) -> np.ndarray:
    """0-based flat indices of the points with (i + j) even (1-based i, j), ascending"""
    i, j = np.meshgrid(np.arange(1, grid.n_x + 1), np.arange(1, grid.n_y + 1), indexing="ij")
    return np.flatnonzero(((i + j) % 2 == 0).ravel(order="F"))


@dataclass(frozen=True)
class ObservationModel:
    """
    Linear selection operator H with noise covariance gamma^2 I

    Attributes:
        pattern: 'dense' or 'checkerboard'
        gamma: Observation noise standard deviation
        grid: Grid the selection refers to
        indices: 0-based flat indices of the observed points, ascending
    """

    pattern: str
    gamma: float
    grid: Grid2D
    indices: np.ndarray

    @classmethod
    def from_pattern(cls, pattern: str, gamma: float, grid: Grid2D) -> "ObservationModel":
        if gamma < 0:
            raise ParameterError(f"observation noise must be >= 0, got {gamma!r}")
        if pattern == "dense":
            indices = dense_indices(grid)
        elif pattern == "checkerboard":
            indices = checkerboard_indices(grid)
        else:
            raise ParameterError(f"unknown observation pattern {pattern!r}, expected one of {PATTERNS}")
        indices.setflags(write=False)
        return cls(pattern, float(gamma), grid, indices)

    @property
    def m_obs(self) -> int:
        return self.indices.size

    @property
    def selection(self) -> np.ndarray:
        """1-based flat indices"""
        return self.indices + 1

    @property
    def is_dense(self) -> bool:
        return self.m_obs == self.grid.size

    def apply(self, f: Field2D) -> np.ndarray:
        """H v"""
        if f.grid != self.grid:
            raise GridError("field and observation model live on different grids")
        return flatten_field(f)[self.indices]


@dataclass
class AnalysisDiagnostics:
    """What happened inside one analysis step"""

    scheme: str = ""
    weighting_scale: float = float("nan")
    fallback: bool = False
    condition_estimate: float = float("nan")
    min_transform_eigenvalue: float = float("nan")
    prior_spread: float = float("nan")
    posterior_spread: float = float("nan")
    seam_gap: float = 0.0
    messages: List[str] = field(default_factory=list)

    def note(self, message: str):
        logger.warning(message)
        self.messages.append(message)


@dataclass(frozen=True)
class AnalysisResult:
    posterior_mean: Field2D
    posterior_ensemble: Ensemble
    diagnostics: AnalysisDiagnostics


def observe_truth(truth: Field2D, obs: ObservationModel, rng: RngStream) -> np.ndarray:
    """y = H v_true + eta, eta ~ N(0, gamma^2 I)"""
    return obs.apply(truth) + rng.normal(obs.gamma, obs.m_obs)


# Posterior mean

def gain_update(prior: np.ndarray, W: sparse.spmatrix, indices: np.ndarray, y: np.ndarray,
                gamma: float) -> Tuple[np.ndarray, float]:
    """
    m = prior + W H^T (H W H^T + gamma^2 I)^-1 (y - H prior)

    Args:
        prior: Flat prior mean
        W: Symmetric weighting matrix (sparse)
        indices: 0-based observed flat indices
        y: Observations at indices
        gamma: Observation noise standard deviation

    Returns:
        (posterior, condition estimate of the innovation matrix)

    Raises:
        LinAlgError: H W H^T + gamma^2 I is not positive definite
    """
    W = sparse.csr_matrix(W)
    innovation_matrix = W[indices][:, indices] + gamma * gamma * sparse.identity(indices.size, format="csr")
    chol = BandedCholesky(innovation_matrix)
    z = chol.solve(np.asarray(y, dtype=np.float64) - prior[indices])
    scattered = np.zeros_like(prior)
    scattered[indices] = z
    return prior + W @ scattered, chol.condition_estimate()


def _dense_diagonal_update(prior: np.ndarray, w: np.ndarray, y: np.ndarray, gamma: float) -> np.ndarray:
    """Pointwise (w y + gamma^2 prior) / (w + gamma^2)"""
    g2 = gamma * gamma
    return (w * y + g2 * prior) / (w + g2)


def is_positive_definite(W: WeightingMatrix) -> bool:
    try:
        BandedCholesky(W.to_sparse())
    except LinAlgError:
        return False
    return True


def _diagonal_fallback(prior_mean: Field2D, y: np.ndarray, obs: ObservationModel, W: WeightingMatrix,
                       diagnostics: AnalysisDiagnostics, where: str) -> Field2D:
    diagnostics.fallback = True
    diagnostics.note(f"{W.scheme} weighting is not positive definite{where}; using its diagonal part for this step")
    return solve_posterior_mean(prior_mean, y, obs, W.diagonal_part(), diagnostics)


def solve_posterior_mean(prior_mean: Field2D, y: np.ndarray, obs: ObservationModel, W: WeightingMatrix,
                         diagnostics: Optional[AnalysisDiagnostics] = None) -> Field2D:
    """
    Posterior mean with fallback bookkeeping

    A banded W that is not positive definite, or whose innovation matrix
    fails to factor, is replaced by its diagonal part; the event is
    recorded in diagnostics.
    """
    if diagnostics is None:
        diagnostics = AnalysisDiagnostics()
    if prior_mean.grid != obs.grid:
        raise GridError("prior mean and observation model live on different grids")
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (obs.m_obs,):
        raise ParameterError(f"expected {obs.m_obs} observations, got shape {y.shape}")
    prior = flatten_field(prior_mean)

    if W.is_diagonal and obs.is_dense:
        g2 = obs.gamma * obs.gamma
        diagnostics.condition_estimate = float(np.max(W.main + g2) / np.min(W.main + g2))
        return unflatten_field(_dense_diagonal_update(prior, W.main, y, obs.gamma), obs.grid)

    if not W.is_diagonal and not is_positive_definite(W):
        # checkerboard H W H^T keeps only the main diagonal of W
        return _diagonal_fallback(prior_mean, y, obs, W, diagnostics, "")

    try:
        posterior, condition = gain_update(prior, W.to_sparse(), obs.indices, y, obs.gamma)
    except LinAlgError as e:
        if W.is_diagonal:
            raise FactorizationError(f"innovation matrix of a diagonal weighting failed to factor: {e}") from e
        return _diagonal_fallback(prior_mean, y, obs, W, diagnostics, " on the observed points")
    diagnostics.condition_estimate = condition
    return unflatten_field(posterior, obs.grid)


def posterior_mean(prior_mean: Field2D, y: np.ndarray, obs: ObservationModel, W: WeightingMatrix) -> Field2D:
    """argmin 1/2 |y - H v|^2_Gamma + 1/2 |v - prior_mean|^2_W"""
    return solve_posterior_mean(prior_mean, y, obs, W)


# Ensemble transform

def transform_from_observed(HX: np.ndarray, gamma: float) -> np.ndarray:
    """[I + (H X)^T Gamma^-1 (H X)]^-1 for Gamma = gamma^2 I"""
    if gamma <= 0:
        raise ParameterError(f"the ensemble transform needs gamma > 0, got {gamma!r}")
    K = HX.shape[1]
    A = np.eye(K) + (HX.T @ HX) / (gamma * gamma)
    eigenvalues, vectors = np.linalg.eigh(0.5 * (A + A.T))
    T = (vectors / eigenvalues) @ vectors.T
    return 0.5 * (T + T.T)


def transform_operator(ce: CenteredEnsemble, obs: ObservationModel) -> np.ndarray:
    """K x K transform operator from the observed deviations"""
    return transform_from_observed(ce.deviations[obs.indices], obs.gamma)


def transform_deviations(X: np.ndarray, T: np.ndarray) -> Tuple[np.ndarray, float]:
    """
    X T^{1/2} with the symmetric square root, re-centered row by row

    Returns:
        (posterior deviations, smallest eigenvalue of T)

    Raises:
        FactorizationError: T is not symmetric positive definite
    """
    scale = max(1.0, float(np.max(np.abs(T))))
    if T.shape[0] != T.shape[1] or np.max(np.abs(T - T.T)) > SYMMETRY_TOLERANCE * scale:
        raise FactorizationError("transform operator is not symmetric")
    eigenvalues, vectors = np.linalg.eigh(0.5 * (T + T.T))
    smallest = float(eigenvalues[0])
    if smallest <= 0:
        raise FactorizationError(f"transform operator is not positive definite (min eigenvalue {smallest:.3e})")
    root = (vectors * np.sqrt(np.maximum(eigenvalues, EIGENVALUE_FLOOR))) @ vectors.T
    Xa = X @ root
    return Xa - np.mean(Xa, axis=1, keepdims=True), smallest


def posterior_ensemble(ce: CenteredEnsemble, posterior_mean: Field2D, T: np.ndarray) -> Ensemble:
    """Members mean + sqrt(K - 1) (X T^{1/2})[:, k]"""
    Xa, _ = transform_deviations(ce.deviations, T)
    members = flatten_field(posterior_mean)[:, None] + np.sqrt(ce.K - 1) * Xa
    return from_flat_members(members, posterior_mean.grid)


def analysis_step(ens: Ensemble, y: np.ndarray, obs: ObservationModel, scheme: WeightingScheme) -> AnalysisResult:
    """
    One ETKF analysis

    center -> inflate (covariance schemes, or the configured override) ->
    weighting -> posterior mean -> transform -> posterior ensemble. The
    weighting only enters the posterior mean; the transform always uses
    the (inflated) sample deviations and Gamma. On a closed grid the
    duplicated boundary lines of the posterior are averaged onto the ring.
    """
    diagnostics = AnalysisDiagnostics(scheme=scheme.label, prior_spread=spread(ens))
    ce = inflate(center(ens), scheme.transform_inflation())
    W = assemble_weighting(scheme, ens)
    diagnostics.weighting_scale = W.scale
    mean = solve_posterior_mean(ce.mean, y, obs, W, diagnostics)
    T = transform_operator(ce, obs)
    Xa, smallest = transform_deviations(ce.deviations, T)
    diagnostics.min_transform_eigenvalue = smallest
    if smallest < EIGENVALUE_FLOOR:
        diagnostics.note(f"transform eigenvalue {smallest:.3e} clamped to {EIGENVALUE_FLOOR:g}")
    members = flatten_field(mean)[:, None] + np.sqrt(ce.K - 1) * Xa
    posterior = from_flat_members(members, ens.grid)
    # duplicated lines of a closed grid are observed independently
    diagnostics.seam_gap = seam_gap(mean.values, ens.grid)
    mean = Field2D(ens.grid, fold_seam(mean.values, ens.grid))
    posterior = Ensemble(ens.grid, fold_seam(posterior.values, ens.grid))
    diagnostics.posterior_spread = spread(posterior)
    logger.debug("analysis %s: spread %.4e -> %.4e, scale %.4e", scheme.label,
                 diagnostics.prior_spread, diagnostics.posterior_spread, W.scale)
    return AnalysisResult(mean, posterior, diagnostics)
