"""Small complex linear-algebra helpers shared across the package.

Conventions: vec() stacks columns (Fortran order); the gradient of a real
scalar with respect to a complex matrix X means the derivative with respect
to conj(X), i.e. 0.5 * (d/dRe + 1j * d/dIm).
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve


class NumericalError(RuntimeError):
    """Raised when a factorization or line search fails irrecoverably."""


def vec(a: np.ndarray) -> np.ndarray:
    """Stack the columns of a matrix into a vector."""
    return a.reshape(-1, order="F")


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of vec(); v must have rows*cols entries."""
    return np.asarray(v).reshape((rows, cols), order="F")


def kron2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product via broadcasting; faster than np.kron for small blocks."""
    p, q = a.shape
    m, n = b.shape
    out = a[:, None, :, None] * b[None, :, None, :]
    return out.reshape(p * m, q * n)


def kron_eye(a: np.ndarray, m: int) -> np.ndarray:
    """a kron eye(m) without forming the identity."""
    p, q = a.shape
    out = np.zeros((p, m, q, m), dtype=np.result_type(a, np.complex128))
    idx = np.arange(m)
    out[:, idx, :, idx] = a
    return out.reshape(p * m, q * m)


def block_trace(mat: np.ndarray, m: int) -> np.ndarray:
    """Partial trace over the inner m x m blocks of a (p*m) x (q*m) matrix.

    Returns the p x q matrix whose (i, j) entry is the trace of block (i, j).
    """
    pm, qm = mat.shape
    p, q = pm // m, qm // m
    return np.einsum("isjs->ij", mat.reshape(p, m, q, m))


def herm(a: np.ndarray) -> np.ndarray:
    """Hermitian part, (a + a^H) / 2."""
    return 0.5 * (a + a.conj().T)


def cgauss(rng: np.random.Generator, *shape: int) -> np.ndarray:
    """Standard circularly-symmetric complex Gaussian entries, unit variance."""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) / np.sqrt(2.0)


def psd_sqrt(a: np.ndarray) -> np.ndarray:
    """Hermitian PSD square root; small negative eigenvalues are clipped to 0."""
    w, v = np.linalg.eigh(herm(a))
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def chol_logdet(a: np.ndarray):
    """Cholesky factor and log-determinant of a Hermitian PD matrix.

    On factorization failure a jitter of 1e-12 * tr(a)/n is added once; a
    second failure raises NumericalError with the condition number.
    """
    a = herm(a)
    n = a.shape[0]
    try:
        low = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        jitter = 1e-12 * np.real(np.trace(a)) / max(n, 1)
        try:
            low = np.linalg.cholesky(a + jitter * np.eye(n))
        except np.linalg.LinAlgError as exc:
            cond = np.linalg.cond(a)
            raise NumericalError(
                f"cholesky failed after jitter retry (cond={cond:.3e})"
            ) from exc
    logdet = 2.0 * np.sum(np.log(np.real(np.diag(low))))
    return low, logdet


def solve_hermitian(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a @ x = b for Hermitian PD a via Cholesky."""
    try:
        factor = cho_factor(herm(a), lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("hermitian solve: factorization failed") from exc
    return cho_solve(factor, b, check_finite=False)


def chol_solve(low: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve with a precomputed lower Cholesky factor."""
    return cho_solve((low, True), b, check_finite=False)
