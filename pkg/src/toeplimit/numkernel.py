"""Dense complex linear-algebra foundation.

All matrices are plain complex128 ndarrays with value semantics; the helpers
here add the validation, the biorthogonal left eigenvectors and the pivot-level
singularity checks that the rest of the package relies on.
"""
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import ConvergenceFailure, NonSquare, SingularMatrix

DEGENERACY_TOL = 1e-8
SINGULARITY_TOL = 1e-12


def as_cmatrix(data) -> np.ndarray:
    """Coerce to a 2-D complex128 array and reject non-finite entries."""
    m = np.array(data, dtype=np.complex128)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains NaN or Inf entries")
    return m


def _require_square(m: np.ndarray) -> np.ndarray:
    m = as_cmatrix(m)
    if m.shape[0] != m.shape[1]:
        raise NonSquare(f"matrix of shape {m.shape} is not square")
    return m


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues with biorthogonal right/left eigenvector matrices.

    Columns of ``left_vectors`` are normalized so that
    ``left_vectors[:, i].conj() @ right_vectors[:, j] == delta_ij``
    (exact up to solve tolerance, since the left matrix is obtained from the
    inverse of the right one rather than a second eigensolve).
    """
    values: np.ndarray         # (n,)
    right_vectors: np.ndarray  # (n, n), columns
    left_vectors: np.ndarray   # (n, n), columns
    condition_flags: np.ndarray  # (n,) bool, near-degenerate eigenvalues

    @property
    def left_rows(self) -> np.ndarray:
        """Rows w_i with w_i @ right_j = delta_ij (= inv(right_vectors))."""
        return self.left_vectors.conj().T


def eigenpairs(m, degeneracy_tol: float = DEGENERACY_TOL) -> EigenDecomposition:
    """Full eigendecomposition with biorthogonal left vectors."""
    m = _require_square(m)
    try:
        values, right = np.linalg.eig(m)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    try:
        w = np.linalg.inv(right)
    except np.linalg.LinAlgError as exc:
        # Defective matrix: right eigenvector matrix is singular.
        raise ConvergenceFailure(f"defective eigenbasis: {exc}") from exc
    gap = np.abs(values[:, None] - values[None, :])
    scale = 1.0 + np.maximum(np.abs(values)[:, None], np.abs(values)[None, :])
    np.fill_diagonal(gap, np.inf)
    flags = np.any(gap < degeneracy_tol * scale, axis=1)
    return EigenDecomposition(values, right, w.conj().T, flags)


def determinant(m) -> complex:
    """Determinant via pivoted LU factorization."""
    m = _require_square(m)
    if m.shape[0] == 0:
        return 1.0 + 0.0j
    return complex(np.linalg.det(m))


def solve(m, rhs) -> np.ndarray:
    """Solve m @ x = rhs, rejecting numerically singular m at pivot level."""
    m = _require_square(m)
    rhs = np.asarray(rhs, dtype=np.complex128)
    if rhs.shape[0] != m.shape[0]:
        raise ValueError("row count of RHS does not match matrix")
    if m.shape[0] == 0:
        return rhs.copy()
    with warnings.catch_warnings():
        # the pivot check below owns singularity reporting
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(m, check_finite=False)
    pivots = np.abs(np.diag(lu))
    threshold = SINGULARITY_TOL * max(np.max(np.abs(m).sum(axis=1)), 1e-300)
    if np.min(pivots) < threshold:
        raise SingularMatrix(
            f"pivot {np.min(pivots):.3e} below threshold {threshold:.3e}")
    return sla.lu_solve((lu, piv), rhs, check_finite=False)


def inverse(m) -> np.ndarray:
    m = _require_square(m)
    return solve(m, np.eye(m.shape[0], dtype=np.complex128))
