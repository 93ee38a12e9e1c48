"""
Uniform periodic 2D grid and scalar fields
Flattening between grid and vector index spaces, central differences
and the binary/CSV field formats shared by every other module
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from src.core.errors import GridError

logger = logging.getLogger(__name__)

FIELD_HEADER_DTYPE = np.dtype("<u8")
FIELD_VALUE_DTYPE = np.dtype("<f8")


@dataclass(frozen=True)
class Grid2D:
    """Uniform tensor grid on [x_min, x_max] x [y_min, y_max]

    A closed grid repeats its first grid line as its last one (101 points
    on [0, 1] with periodic boundaries); the periodic ring then consists
    of the n - 1 distinct points. An open grid wraps modulo n.
    """

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    n_x: int
    n_y: int
    closed: bool = False

    def __post_init__(self):
        if int(self.n_x) != self.n_x or int(self.n_y) != self.n_y:
            raise GridError(f"grid counts must be integers, got {self.n_x}x{self.n_y}")
        if self.n_x < 3 or self.n_y < 3:
            raise GridError(f"grid needs at least 3 points per direction, got {self.n_x}x{self.n_y}")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise GridError("grid bounds must satisfy x_max > x_min and y_max > y_min")

    @classmethod
    def unit_square(cls, n: int, closed: bool = True) -> "Grid2D":
        """n x n grid on [0, 1]^2"""
        return cls(0.0, 1.0, 0.0, 1.0, n, n, closed)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_x - 1)

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / (self.n_y - 1)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n_x, self.n_y)

    @property
    def size(self) -> int:
        return self.n_x * self.n_y

    @property
    def x(self) -> np.ndarray:
        return self.x_min + np.arange(self.n_x) * self.dx

    @property
    def y(self) -> np.ndarray:
        return self.y_min + np.arange(self.n_y) * self.dy

    def coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        """Meshgrid (X, Y) of shape (n_x, n_y), axis 0 running over i"""
        return np.meshgrid(self.x, self.y, indexing="ij")

    def refine(self, factor: int) -> "Grid2D":
        """Grid whose every factor-th point coincides with a point of this grid"""
        if int(factor) != factor or factor < 1:
            raise GridError(f"refinement factor must be a positive integer, got {factor!r}")
        factor = int(factor)
        return Grid2D(self.x_min, self.x_max, self.y_min, self.y_max,
                      (self.n_x - 1) * factor + 1, (self.n_y - 1) * factor + 1,
                      self.closed)


class Field2D:
    """One scalar state on a Grid2D, values[i, j] = v(x_i, y_j) (0-based)"""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid2D, values):
        arr = np.array(values, dtype=np.float64)
        if arr.shape != grid.shape:
            raise GridError(f"field shape {arr.shape} does not match grid {grid.shape}")
        if not np.all(np.isfinite(arr)):
            raise GridError("field contains non-finite values")
        arr.setflags(write=False)
        self.grid = grid
        self.values = arr

    @classmethod
    def constant(cls, grid: Grid2D, value: float) -> "Field2D":
        return cls(grid, np.full(grid.shape, float(value)))

    def __repr__(self) -> str:
        return f"Field2D({self.grid.n_x}x{self.grid.n_y}, min={self.values.min():.4g}, max={self.values.max():.4g})"

    def __sub__(self, other: "Field2D") -> "Field2D":
        require_same_grid(self, other)
        return Field2D(self.grid, self.values - other.values)


def require_same_grid(a: Field2D, b: Field2D):
    """Raise GridError unless both fields live on the same grid"""
    if a.grid != b.grid:
        raise GridError(f"grid mismatch: {a.grid} vs {b.grid}")


# Index spaces (1-based in the public API, m = i + (j - 1) * n_x)

def flatten(i: int, j: int, grid: Grid2D) -> int:
    """Linear index of grid point (i, j)"""
    if not (1 <= i <= grid.n_x and 1 <= j <= grid.n_y):
        raise GridError(f"grid index ({i}, {j}) outside 1..{grid.n_x} x 1..{grid.n_y}")
    return i + (j - 1) * grid.n_x


def unflatten(m: int, grid: Grid2D) -> Tuple[int, int]:
    """Grid point (i, j) of linear index m"""
    if not 1 <= m <= grid.size:
        raise GridError(f"flat index {m} outside 1..{grid.size}")
    j, i = divmod(m - 1, grid.n_x)
    return i + 1, j + 1


def flatten_field(f: Field2D) -> np.ndarray:
    """Column-major stacking, component m - 1 holds f[i, j]"""
    return f.values.ravel(order="F").copy()


def unflatten_field(vector, grid: Grid2D) -> Field2D:
    vector = np.asarray(vector, dtype=np.float64)
    if vector.shape != (grid.size,):
        raise GridError(f"vector of length {vector.size} cannot fill a {grid.n_x}x{grid.n_y} grid")
    return Field2D(grid, vector.reshape(grid.shape, order="F"))


# Periodic ring

def to_ring(values: np.ndarray, grid: Grid2D) -> np.ndarray:
    """Distinct points of the periodic ring (trailing two axes are i, j)"""
    if not grid.closed:
        return values
    return values[..., :-1, :-1]


def from_ring(ring: np.ndarray, grid: Grid2D) -> np.ndarray:
    """Re-impose the duplicated last grid lines of a closed grid"""
    if not grid.closed:
        return ring
    pad = [(0, 0)] * (ring.ndim - 2) + [(0, 1), (0, 1)]
    return np.pad(ring, pad, mode="wrap")


def seam_gap(values: np.ndarray, grid: Grid2D) -> float:
    """Largest difference between a duplicated grid line and the line it repeats"""
    if not grid.closed:
        return 0.0
    return float(max(np.max(np.abs(values[..., -1, :] - values[..., 0, :])),
                     np.max(np.abs(values[..., :, -1] - values[..., :, 0]))))


def fold_seam(values: np.ndarray, grid: Grid2D) -> np.ndarray:
    """
    Average every duplicated point of a closed grid onto its ring point and
    re-impose the duplicates; the corner averages its four copies
    """
    if not grid.closed:
        return values
    ring = np.array(values[..., :-1, :-1], dtype=np.float64)
    counts = np.ones(ring.shape[-2:])
    ring[..., 0, :] += values[..., -1, :-1]
    counts[0, :] += 1
    ring[..., :, 0] += values[..., :-1, -1]
    counts[:, 0] += 1
    ring[..., 0, 0] += values[..., -1, -1]
    counts[0, 0] += 1
    return from_ring(ring / counts, grid)


def _axis(direction: str) -> int:
    if direction == "x":
        return -2
    if direction == "y":
        return -1
    raise GridError(f"unknown direction {direction!r}, expected 'x' or 'y'")


def central_diff_values(values: np.ndarray, grid: Grid2D, direction: str) -> np.ndarray:
    """Second-order periodic central difference on raw arrays (..., n_x, n_y)"""
    axis = _axis(direction)
    h = grid.dx if direction == "x" else grid.dy
    ring = to_ring(values, grid)
    diff = (np.roll(ring, -1, axis=axis) - np.roll(ring, 1, axis=axis)) / (2.0 * h)
    return from_ring(diff, grid)


def central_diff(f: Field2D, direction: str) -> Field2D:
    """(f[i+1] - f[i-1]) / (2 h) along direction with periodic wraparound"""
    return Field2D(f.grid, central_diff_values(f.values, f.grid, direction))


# Serialization

PathLike = Union[str, Path]


def field_to_bytes(f: Field2D) -> bytes:
    header = np.array([f.grid.n_x, f.grid.n_y], dtype=FIELD_HEADER_DTYPE).tobytes()
    return header + flatten_field(f).astype(FIELD_VALUE_DTYPE).tobytes()


def field_from_bytes(payload: bytes, grid: Grid2D) -> Field2D:
    if len(payload) < 16:
        raise GridError("field payload shorter than its 16-byte header")
    n_x, n_y = (int(v) for v in np.frombuffer(payload[:16], dtype=FIELD_HEADER_DTYPE))
    if (n_x, n_y) != grid.shape:
        raise GridError(f"field header {n_x}x{n_y} does not match grid {grid.n_x}x{grid.n_y}")
    body = payload[16:]
    if len(body) != 8 * n_x * n_y:
        raise GridError(f"field payload holds {len(body)} bytes, expected {8 * n_x * n_y}")
    return unflatten_field(np.frombuffer(body, dtype=FIELD_VALUE_DTYPE), grid)


def write_field(f: Field2D, path: PathLike):
    """Write the binary field format (16-byte header, little-endian doubles in flatten order)"""
    Path(path).write_bytes(field_to_bytes(f))


def read_field(path: PathLike, grid: Grid2D) -> Field2D:
    try:
        payload = Path(path).read_bytes()
    except OSError as e:
        raise GridError(f"cannot read field {path}: {e}") from e
    return field_from_bytes(payload, grid)


def write_field_csv(f: Field2D, path: PathLike):
    """CSV debug format: n_y rows of n_x values"""
    np.savetxt(path, f.values.T, delimiter=",", fmt="%.17g")


def read_field_csv(path: PathLike, grid: Grid2D) -> Field2D:
    rows = np.loadtxt(path, delimiter=",", ndmin=2)
    if rows.shape != (grid.n_y, grid.n_x):
        raise GridError(f"CSV holds {rows.shape[0]}x{rows.shape[1]} values, expected {grid.n_y}x{grid.n_x}")
    return Field2D(grid, rows.T)
