"""Dense complex Hermitian linear algebra used by every solver.

All matrices are plain ``numpy`` arrays of dtype ``complex128`` (or real
arrays, which are promoted).  Eigendecompositions are delegated to LAPACK via
:func:`numpy.linalg.eigh`; this module adds the ordering convention, the
Hermitian contract checks and the singular-aware trace of the inverse.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError

HERMITIAN_RTOL = 1e-12


def hermitian_defect(a):
    """Largest entry of ``|A - A^H|`` relative to the largest entry of ``|A|``."""
    a = np.asarray(a)
    scale = np.max(np.abs(a)) if a.size else 0.0
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(a - a.conj().T)) / scale)


def check_hermitian(a, rtol=HERMITIAN_RTOL):
    """Return ``a`` as a complex square array, raising if it is not Hermitian."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractError("matrix has non-finite entries")
    if hermitian_defect(a) > rtol:
        raise ContractError(
            f"matrix is not Hermitian (defect {hermitian_defect(a):.3e} > {rtol:.1e})"
        )
    return a


def hermitize(a):
    """Symmetrize away round-off: ``(A + A^H) / 2``."""
    a = np.asarray(a, dtype=complex)
    return 0.5 * (a + a.conj().T)


@dataclass(frozen=True)
class EvdResult:
    """Eigenvalues in non-increasing order and the matching unitary ``U``."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.conj().T


def evd(a):
    """Eigendecomposition ``A = U diag(alpha) U^H`` with ``alpha`` non-increasing."""
    a = check_hermitian(a)
    w, u = np.linalg.eigh(hermitize(a))
    return EvdResult(w[::-1].copy(), u[:, ::-1].copy())


def min_eigpair(a):
    """Smallest eigenvalue of a Hermitian matrix and a unit-norm eigenvector."""
    a = check_hermitian(a)
    w, u = np.linalg.eigh(hermitize(a))
    return float(w[0]), u[:, 0].copy()


def default_pd_tol(a):
    a = np.asarray(a)
    return 1e-10 * float(np.real(np.trace(a))) / a.shape[0]


def trace_inverse(a, pd_tol=None):
    """``tr(A^{-1})`` computed from the spectrum, ``inf`` when A is singular.

    A is treated as singular when any eigenvalue is at or below ``pd_tol``
    (default ``1e-10 * tr(A) / dim``, a scale-relative cutoff).
    """
    a = check_hermitian(a)
    if pd_tol is None:
        pd_tol = default_pd_tol(a)
    w = np.linalg.eigvalsh(hermitize(a))
    if w[0] <= max(pd_tol, 0.0):
        return float("inf")
    return float(np.sum(1.0 / w))


def is_psd(a, tol=0.0):
    """True iff the smallest eigenvalue of ``A`` is at least ``-tol``."""
    a = check_hermitian(a)
    return bool(np.linalg.eigvalsh(hermitize(a))[0] >= -tol)


def psd_sqrt(a):
    """Hermitian square root with negative eigenvalues clipped to zero."""
    w, u = np.linalg.eigh(hermitize(check_hermitian(a)))
    return (u * np.sqrt(np.clip(w, 0.0, None))) @ u.conj().T
