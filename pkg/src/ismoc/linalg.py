"""Dense complex linear algebra used by the propagators.

Everything here is a thin, validated layer over numpy/scipy. States are at
most a few thousand entries long, so dense storage is used throughout.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg

__all__ = [
    "LinalgError",
    "matvec",
    "solve_linear",
    "dft",
    "eig_hermitian",
    "is_hermitian",
]

#: Relative pivot threshold below which a matrix is treated as singular.
PIVOT_TOL = 1e-14


class LinalgError(ValueError):
    """Raised on dimension mismatches, singular systems or bad input."""


def _as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2:
        raise LinalgError(f"expected a matrix, got shape {a.shape}")
    return a


def _as_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.complex128)
    if v.ndim != 1:
        raise LinalgError(f"expected a vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise LinalgError("vector has non-finite entries")
    return v


def matvec(m, v) -> np.ndarray:
    m = _as_matrix(m)
    v = _as_vector(v)
    if m.shape[1] != v.shape[0]:
        raise LinalgError(
            f"dimension mismatch: matrix has {m.shape[1]} columns, "
            f"vector has {v.shape[0]} entries"
        )
    return m @ v


def solve_linear(a, b) -> np.ndarray:
    """Solve ``a x = b`` by LU with partial pivoting.

    Raises:
        LinalgError: if ``a`` is not square, the shapes disagree, or a pivot
            falls below ``PIVOT_TOL`` times the largest row norm of ``a``.
    """
    a = _as_matrix(a)
    b = np.asarray(b, dtype=np.complex128)
    n, m = a.shape
    if n != m:
        raise LinalgError(f"matrix must be square, got {a.shape}")
    if b.shape[0] != n:
        raise LinalgError(f"right-hand side has {b.shape[0]} rows, expected {n}")
    with warnings.catch_warnings():
        # singularity is diagnosed below with a condition estimate
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=True)
    pivots = np.abs(np.diag(lu))
    scale = np.max(np.linalg.norm(a, axis=1)) if n else 0.0
    if scale == 0.0 or pivots.min() < PIVOT_TOL * scale:
        cond = np.inf if scale == 0.0 else np.linalg.cond(a)
        raise LinalgError(
            f"matrix is singular to working precision "
            f"(min pivot {pivots.min():.3e}, condition number {cond:.3e})"
        )
    return scipy.linalg.lu_solve((lu, piv), b)


def dft(v, inverse: bool = False) -> np.ndarray:
    """Unitary discrete Fourier transform (``1/sqrt(n)`` in both directions)."""
    v = _as_vector(v)
    if inverse:
        return np.fft.ifft(v, norm="ortho")
    return np.fft.fft(v, norm="ortho")


def is_hermitian(a, tol: float = 1e-10) -> bool:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    scale = max(1.0, float(np.max(np.abs(a))) if a.size else 0.0)
    return bool(np.max(np.abs(a - a.conj().T), initial=0.0) <= tol * scale)


def eig_hermitian(a) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.

    Returns ``(w, v)`` with ``a @ v[:, k] == w[k] * v[:, k]``.
    """
    a = _as_matrix(a)
    if not is_hermitian(a):
        raise LinalgError("matrix is not Hermitian")
    a = 0.5 * (a + a.conj().T)
    w, v = np.linalg.eigh(a)
    return w, v
