"""Dense matrix helpers and thin SVD.

Matrices are plain C-contiguous ``numpy.ndarray`` objects with dtype
float64.  Every public operation validates that its inputs and outputs
are finite; 64-bit precision is kept throughout because downstream
threshold comparisons are sensitive to small drift.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ShapeError

DEFAULT_RANK_REL_TOL = 1e-10


def as_matrix(a, name="matrix"):
    """Coerce ``a`` to a finite, C-contiguous float64 2-D array.

    Raises ShapeError for wrong dimensionality and NumericError for
    NaN/Inf entries.
    """
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite entries")
    return arr


def matmul(a, b):
    """Standard matrix product ``a @ b`` with shape and finiteness checks."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}"
        )
    out = a @ b
    if not np.all(np.isfinite(out)):
        raise NumericError("matrix product overflowed to non-finite values")
    return out


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD ``u @ diag(sigma) @ vt`` of a source matrix.

    ``sigma`` is non-increasing and non-negative; ``u`` has orthonormal
    columns and ``vt`` orthonormal rows.
    """

    u: np.ndarray
    sigma: np.ndarray
    vt: np.ndarray

    @property
    def factor_count(self):
        """Number of stored factors, min(rows, cols) of the source.

        Not the numerical rank; see :func:`effective_rank` for that.
        """
        return self.sigma.shape[0]

    def reconstruct(self):
        """Recompose the factored matrix (used by diagnostics and tests)."""
        return (self.u * self.sigma) @ self.vt

    def tail_energy(self, m):
        """Sum of squared singular values beyond the first ``m``."""
        return float(np.sum(self.sigma[m:] ** 2))


def thin_svd(y):
    """Thin singular value decomposition of ``y``.

    Returns factors with ``r = min(rows, cols)`` singular values sorted
    non-increasing.  Deterministic for a fixed input and BLAS build.
    """
    y = as_matrix(y, "y")
    if y.shape[0] < 1 or y.shape[1] < 1:
        raise ShapeError(f"cannot decompose empty matrix of shape {y.shape}")
    try:
        u, s, vt = np.linalg.svd(y, full_matrices=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericError(f"SVD did not converge: {exc}") from exc
    return SvdFactors(u=u, sigma=s, vt=vt)


def effective_rank(sigma, rel_tol=DEFAULT_RANK_REL_TOL):
    """Count singular values above ``rel_tol`` times the largest one.

    Diagnostic only: the width search never consumes this value, since
    picking a truncation threshold is itself a judgement call.  Returns 0
    for an all-zero spectrum.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.size == 0 or sigma[0] == 0.0:
        return 0
    return int(np.count_nonzero(sigma > rel_tol * sigma[0]))


def frobenius(a):
    return float(np.linalg.norm(a))
