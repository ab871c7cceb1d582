"""Dense complex Hermitian linear algebra shared by the rest of the package.

Matrices are plain ``numpy`` arrays. `as_hermitian` is the single place
where the Hermitian (and optionally PSD) invariants are checked; the other
helpers assume validated input.
"""

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NotPD, NotPSD

HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10


def as_hermitian(m, psd=False, psd_tol=PSD_TOL):
    """Validate ``m`` as a Hermitian matrix and return an exactly Hermitian copy.

    Parameters
    ----------
    m : array_like
        Square matrix.
    psd : bool
        Also require the smallest eigenvalue to be at least
        ``-psd_tol * max(1, largest eigenvalue)``.

    Returns
    -------
    numpy.ndarray
        Complex array equal to ``(m + m^H) / 2``.
    """
    a = np.array(m, dtype=complex, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if a.size and np.max(np.abs(a - a.conj().T)) > HERMITIAN_TOL * scale:
        raise NotPSD("matrix is not Hermitian")
    a = 0.5 * (a + a.conj().T)
    if psd and a.size:
        w = np.linalg.eigvalsh(a)
        if w[0] < -psd_tol * max(1.0, w[-1]):
            raise NotPSD(f"smallest eigenvalue {w[0]:.3e} is negative")
    return a


def hermitian_sqrt(m, clamp_tol=PSD_TOL):
    """Return the Hermitian PSD square root of a PSD matrix.

    Eigenvalues in ``[-clamp_tol * max(1, lambda_max), 0)`` are treated as
    rounding noise and set to zero; anything more negative raises `NotPSD`.
    """
    a = as_hermitian(m)
    if a.size == 0:
        return a
    w, v = np.linalg.eigh(a)
    floor = -clamp_tol * max(1.0, w[-1])
    if w[0] < floor:
        raise NotPSD(f"smallest eigenvalue {w[0]:.3e} below {floor:.3e}")
    s = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T
    return 0.5 * (s + s.conj().T)


def logdet_hpd(m):
    """Natural log-determinant of a Hermitian positive definite matrix.

    Uses a Cholesky factorization and falls back to the eigenvalues when the
    factorization breaks down on a nearly singular input.
    """
    a = np.asarray(m)
    if a.size == 0:
        return 0.0
    try:
        lower = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        w = np.linalg.eigvalsh(a)
        if w[0] <= 0.0:
            raise NotPD(f"matrix is not positive definite (lambda_min={w[0]:.3e})")
        return float(np.sum(np.log(w)))
    return float(2.0 * np.sum(np.log(np.diag(lower).real)))


def solve_hpd(m, rhs):
    """Solve ``m x = rhs`` for Hermitian positive definite ``m``."""
    a = np.asarray(m)
    b = np.asarray(rhs)
    if b.shape[0] != a.shape[0]:
        raise DimensionMismatch(f"rhs has {b.shape[0]} rows, matrix has dim {a.shape[0]}")
    try:
        factor = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPD(str(exc)) from None
    return scipy.linalg.cho_solve(factor, b, check_finite=False)


def inv_hpd(m):
    """Inverse of a Hermitian positive definite matrix, made exactly Hermitian."""
    a = np.asarray(m)
    x = solve_hpd(a, np.eye(a.shape[0], dtype=a.dtype))
    return 0.5 * (x + x.conj().T)


def trace_of_products(stack, m):
    """Return ``[tr(stack[i] @ m) for i]`` without forming the products."""
    return np.einsum("kij,ji->k", stack, m).real
