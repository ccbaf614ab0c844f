"""Complex linear algebra and Gaussian sampling shared by the detectors."""

from __future__ import annotations

import numpy as np

PIVOT_RTOL = 1e-12


class NumericalFailure(ArithmeticError):
    """A factorization or prior computation hit a non-positive pivot."""

    def __init__(self, message: str, pivot: int | None = None):
        super().__init__(message)
        self.pivot = pivot


def _as_matrix(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.size == 0:
        raise ValueError(f"{name} must be a nonempty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def gram_regularized(H, sigma2: float) -> np.ndarray:
    """Return ``H^H H + sigma2 * I``, exactly Hermitian.

    Only the upper triangle is computed; the lower triangle is its mirror, so
    ``A[i, j] == conj(A[j, i])`` holds bit for bit.
    """
    H = _as_matrix(H, "H")
    sigma2 = float(sigma2)
    if not np.isfinite(sigma2) or sigma2 < 0:
        raise ValueError(f"sigma2 must be finite and >= 0, got {sigma2}")
    n = H.shape[1]
    full = H.conj().T @ H
    upper = np.triu(full, 1)
    diag = full.diagonal().real + sigma2
    return upper + upper.conj().T + np.diag(diag).astype(np.complex128)


def cholesky(A) -> np.ndarray:
    """Lower-triangular ``L`` with ``L L^H = A`` for Hermitian positive definite ``A``.

    Raises NumericalFailure (carrying the pivot index) when a pivot falls at
    or below ``1e-12`` times the largest diagonal magnitude.
    """
    A = _as_matrix(A, "A")
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"A must be square, got shape {A.shape}")
    tol = PIVOT_RTOL * np.max(np.abs(A.diagonal()))
    L = np.zeros_like(A)
    for k in range(n):
        row = L[k, :k]
        pivot = A[k, k].real - np.vdot(row, row).real
        if not pivot > tol:
            raise NumericalFailure(f"matrix not positive definite at pivot {k}", pivot=k)
        lkk = np.sqrt(pivot)
        L[k, k] = lkk
        if k + 1 < n:
            L[k + 1 :, k] = (A[k + 1 :, k] - L[k + 1 :, :k] @ row.conj()) / lkk
    return L


def hermitian_solve(A, B) -> np.ndarray:
    """Solve ``A X = B`` for Hermitian positive definite ``A`` via Cholesky."""
    A = _as_matrix(A, "A")
    B = np.asarray(B, dtype=np.complex128)
    vector = B.ndim == 1
    if vector:
        B = B[:, None]
    if B.ndim != 2 or B.shape[0] != A.shape[0]:
        raise ValueError(f"B has {B.shape[0] if B.ndim else 0} rows, A is {A.shape}")
    L = cholesky(A)
    n = A.shape[0]
    # forward substitution L Z = B, then back substitution L^H X = Z
    Z = np.empty_like(B)
    for k in range(n):
        Z[k] = (B[k] - L[k, :k] @ Z[:k]) / L[k, k]
    X = np.empty_like(B)
    LH = L.conj().T
    for k in range(n - 1, -1, -1):
        X[k] = (Z[k] - LH[k, k + 1 :] @ X[k + 1 :]) / LH[k, k]
    return X[:, 0] if vector else X


def sample_complex_gaussian(rng: np.random.Generator, var_per_real_dim: float, size=None):
    """Circularly-symmetric complex Gaussian draw(s).

    Real and imaginary parts are independent with variance ``var_per_real_dim``
    each. The real parts are drawn before the imaginary parts, so a given
    generator state always yields the same samples.
    """
    var = float(var_per_real_dim)
    if not np.isfinite(var) or var < 0:
        raise ValueError(f"variance must be finite and >= 0, got {var}")
    scale = np.sqrt(var)
    re = rng.standard_normal(size)
    im = rng.standard_normal(size)
    z = scale * (re + 1j * im)
    return complex(z) if size is None else z
