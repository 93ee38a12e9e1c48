"""
Ensemble container
Seeded initialization, forecast propagation and the first/second moment
summaries (mean, centered deviations, inflation) used by the analysis
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
from joblib import Parallel, delayed

from src.core.errors import GridError, ParameterError
from src.core.grid import (FIELD_HEADER_DTYPE, Field2D, Grid2D, field_from_bytes,
                           field_to_bytes, flatten_field, from_ring, to_ring)
from src.core.solver import PdeModel, advance_values
from src.utils.resources import resolve_workers
from src.utils.rng import RngStream

logger = logging.getLogger(__name__)


class Ensemble:
    """K fields on one grid, stored as a (K, n_x, n_y) array"""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid2D, values):
        arr = np.array(values, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[1:] != grid.shape:
            raise GridError(f"ensemble array of shape {arr.shape} does not match grid {grid.shape}")
        if arr.shape[0] < 2:
            raise ParameterError(f"an ensemble needs K >= 2 members, got {arr.shape[0]}")
        if not np.all(np.isfinite(arr)):
            raise GridError("ensemble contains non-finite values")
        arr.setflags(write=False)
        self.grid = grid
        self.values = arr

    @classmethod
    def from_members(cls, members: Sequence[Field2D]) -> "Ensemble":
        if not members:
            raise ParameterError("an ensemble needs members")
        grid = members[0].grid
        for member in members[1:]:
            if member.grid != grid:
                raise GridError("all ensemble members must share one grid")
        return cls(grid, np.stack([m.values for m in members]))

    @property
    def K(self) -> int:
        return self.values.shape[0]

    @property
    def members(self) -> List[Field2D]:
        return [Field2D(self.grid, v) for v in self.values]

    def member(self, k: int) -> Field2D:
        return Field2D(self.grid, self.values[k])

    def flat_members(self) -> np.ndarray:
        """(n_x*n_y, K) matrix whose column k is flatten_field(member k)"""
        return self.values.transpose(0, 2, 1).reshape(self.K, -1).T.copy()

    def __repr__(self) -> str:
        return f"Ensemble(K={self.K}, grid={self.grid.n_x}x{self.grid.n_y})"


@dataclass(frozen=True)
class CenteredEnsemble:
    """Ensemble mean plus deviations (v_k - mean) / sqrt(K - 1), flattened"""

    mean: Field2D
    deviations: np.ndarray

    @property
    def K(self) -> int:
        return self.deviations.shape[1]

    def covariance(self) -> np.ndarray:
        """Dense X X^T; test-scale grids only"""
        return self.deviations @ self.deviations.T


def _flat_to_batch(flat: np.ndarray, grid: Grid2D) -> np.ndarray:
    """(K, n_x*n_y) rows in flatten order -> (K, n_x, n_y)"""
    return flat.reshape(flat.shape[0], grid.n_y, grid.n_x).transpose(0, 2, 1)


def from_flat_members(flat: np.ndarray, grid: Grid2D) -> Ensemble:
    """Inverse of Ensemble.flat_members: (n_x*n_y, K) columns -> ensemble"""
    return Ensemble(grid, _flat_to_batch(np.ascontiguousarray(flat.T), grid))


def init_ensemble(u0: Field2D, K: int, noise_std: float, rng: RngStream) -> Ensemble:
    """
    Perturb u0 with additive i.i.d. Gaussian noise

    Noise is drawn member-major, each member in flatten order. On a closed
    grid the duplicated last grid lines copy the first ones.

    Args:
        u0: Initial mean field
        K: Ensemble size (>= 2)
        noise_std: Standard deviation of the perturbations (>= 0)
        rng: Stream the perturbations are drawn from

    Returns:
        The initial ensemble
    """
    if int(K) != K or K < 2:
        raise ParameterError(f"an ensemble needs K >= 2 members, got {K!r}")
    if noise_std < 0:
        raise ParameterError(f"noise standard deviation must be >= 0, got {noise_std!r}")
    grid = u0.grid
    noise = _flat_to_batch(rng.normal(noise_std, (int(K), grid.size)), grid)
    values = from_ring(to_ring(u0.values[None, :, :] + noise, grid), grid)
    return Ensemble(grid, values)


def forecast(ens: Ensemble, n_steps: int, dt: float, model: PdeModel, n_jobs: int = 1) -> Ensemble:
    """
    Advance every member independently through the discrete model

    Args:
        ens: Ensemble at the current time
        n_steps: Number of solver steps
        dt: Solver time step
        model: PDE being integrated
        n_jobs: 1 for a single vectorized sweep, 0 for one worker per core,
            otherwise the number of joblib workers sharing the members

    Returns:
        Forecast ensemble (member order preserved)
    """
    if n_steps == 0:
        return ens
    workers = min(resolve_workers(n_jobs), ens.K)
    if workers == 1:
        values = advance_values(ens.values, n_steps, dt, ens.grid, model)
    else:
        chunks = np.array_split(ens.values, workers)
        parts = Parallel(n_jobs=workers)(
            delayed(advance_values)(chunk, n_steps, dt, ens.grid, model) for chunk in chunks
        )
        values = np.concatenate(parts)
    return Ensemble(ens.grid, values)


def ensemble_mean(ens: Ensemble) -> Field2D:
    return Field2D(ens.grid, np.mean(ens.values, axis=0))


def center(ens: Ensemble) -> CenteredEnsemble:
    """Mean and scaled deviation matrix X with X X^T the sample covariance"""
    mean = ensemble_mean(ens)
    deviations = (ens.flat_members() - flatten_field(mean)[:, None]) / np.sqrt(ens.K - 1)
    deviations.setflags(write=False)
    return CenteredEnsemble(mean, deviations)


def inflate(ce: CenteredEnsemble, alpha: float) -> CenteredEnsemble:
    """Multiplicative inflation of the deviations (covariance scales by alpha^2)"""
    if alpha < 1:
        raise ParameterError(f"inflation factor must be >= 1, got {alpha!r}")
    if alpha == 1:
        return ce
    deviations = alpha * ce.deviations
    deviations.setflags(write=False)
    return CenteredEnsemble(ce.mean, deviations)


def spread(ens: Ensemble) -> float:
    """Grid average of the pointwise sample standard deviation"""
    return float(np.mean(np.std(ens.values, axis=0, ddof=1)))


# Checkpoints

PathLike = Union[str, Path]


def write_ensemble(ens: Ensemble, path: PathLike):
    """Header (K, n_x, n_y) followed by K fields in the binary field format"""
    header = np.array([ens.K, ens.grid.n_x, ens.grid.n_y], dtype=FIELD_HEADER_DTYPE).tobytes()
    with open(path, "wb") as f:
        f.write(header)
        for member in ens.members:
            f.write(field_to_bytes(member))


def read_ensemble(path: PathLike, grid: Grid2D) -> Ensemble:
    try:
        payload = Path(path).read_bytes()
    except OSError as e:
        raise GridError(f"cannot read ensemble {path}: {e}") from e
    if len(payload) < 24:
        raise GridError("ensemble checkpoint shorter than its header")
    K, n_x, n_y = (int(v) for v in np.frombuffer(payload[:24], dtype=FIELD_HEADER_DTYPE))
    if (n_x, n_y) != grid.shape:
        raise GridError(f"checkpoint grid {n_x}x{n_y} does not match {grid.n_x}x{grid.n_y}")
    record = 16 + 8 * n_x * n_y
    if len(payload) != 24 + K * record:
        raise GridError(f"checkpoint holds {len(payload)} bytes, expected {24 + K * record}")
    members = [field_from_bytes(payload[24 + k * record:24 + (k + 1) * record], grid) for k in range(K)]
    return Ensemble.from_members(members)
