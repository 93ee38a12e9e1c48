"""
Banded Cholesky solver for symmetric sparse matrices
Converts a scipy.sparse matrix to LAPACK upper banded storage and factors
it with scipy.linalg.cholesky_banded; diagonal matrices skip LAPACK.
"""
import numpy as np
from numpy.linalg import LinAlgError
from scipy import sparse
from scipy.linalg import cho_solve_banded, cholesky_banded


def bandwidth(matrix: sparse.spmatrix) -> int:
    """Largest |row - col| over the stored nonzeros"""
    coo = sparse.coo_matrix(matrix)
    nonzero = coo.data != 0
    if not np.any(nonzero):
        return 0
    return int(np.max(np.abs(coo.row[nonzero] - coo.col[nonzero])))


def to_upper_banded(matrix: sparse.spmatrix, upper: int) -> np.ndarray:
    """LAPACK storage ab[upper + i - j, j] = a[i, j] for i <= j"""
    n = matrix.shape[0]
    csr = sparse.csr_matrix(matrix)
    ab = np.zeros((upper + 1, n))
    for offset in range(upper + 1):
        ab[upper - offset, offset:] = csr.diagonal(offset)
    return ab


class BandedCholesky:
    """Cholesky factor of a symmetric positive definite sparse banded matrix"""

    def __init__(self, matrix: sparse.spmatrix):
        """
        Args:
            matrix: Square symmetric sparse matrix

        Raises:
            LinAlgError: The matrix is not positive definite
        """
        n, n2 = matrix.shape
        if n != n2:
            raise LinAlgError(f"matrix must be square, got {matrix.shape}")
        self.n = n
        self.upper = bandwidth(matrix)
        if self.upper == 0:
            diag = np.asarray(sparse.csr_matrix(matrix).diagonal(), dtype=np.float64)
            if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
                raise LinAlgError("diagonal matrix is not positive definite")
            self._diag = diag
            self._factor = None
            pivots = np.sqrt(diag)
        else:
            self._diag = None
            self._factor = cholesky_banded(to_upper_banded(matrix, self.upper), lower=False)
            pivots = self._factor[-1]
        self.pivots = pivots

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self._factor is None:
            return rhs / self._diag
        return cho_solve_banded((self._factor, False), rhs)

    def condition_estimate(self) -> float:
        """(max pivot / min pivot)^2, a cheap estimate of the 2-norm condition number"""
        return float((np.max(self.pivots) / np.min(self.pivots)) ** 2)
