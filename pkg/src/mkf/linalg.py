"""Small dense symmetric linear algebra used by the filters and the moment engine."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.linalg

__all__ = [
    "NEG_EIG_TOL",
    "NotPositiveDefiniteError",
    "NotPSDError",
    "EigenDecomposition",
    "as_symmetric",
    "symmetrize",
    "eig_sym",
    "solve_spd",
    "clamp_psd",
]

#: Eigenvalues in [-NEG_EIG_TOL * max(1, |S|_max), 0) are clamped to zero.
NEG_EIG_TOL = 1e-12


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    pass


class NotPSDError(np.linalg.LinAlgError):
    pass


class EigenDecomposition(NamedTuple):
    """``S = T @ diag(lambdas) @ T.T`` with orthogonal ``T``, descending ``lambdas``."""

    T: np.ndarray
    lambdas: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.T * self.lambdas) @ self.T.T


def symmetrize(S) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    return 0.5 * (S + S.T)


def as_symmetric(S, tol: float = 1e-9) -> np.ndarray:
    """Validate a square, numerically symmetric matrix and return it exactly symmetric."""
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise ValueError("matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(S)))) if S.size else 1.0
    if S.size and np.max(np.abs(S - S.T)) > tol * scale:
        raise ValueError("matrix is not symmetric")
    return symmetrize(S)


def eig_sym(S, psd: bool = False) -> EigenDecomposition:
    """Eigendecomposition of a symmetric matrix.

    Eigenvalues are sorted in descending order and each eigenvector is signed
    so that its largest-magnitude entry is positive, which makes ``T``
    deterministic up to ties.  With ``psd=True`` tiny negative eigenvalues
    are clamped to zero and larger ones raise :class:`NotPSDError`.
    """
    S = as_symmetric(S)
    if S.shape[0] == 0:
        raise ValueError("empty matrix")
    lam, T = np.linalg.eigh(S)
    order = np.argsort(-lam, kind="stable")
    lam, T = lam[order], T[:, order]
    idx = np.argmax(np.abs(T), axis=0)
    signs = np.sign(T[idx, np.arange(T.shape[1])])
    signs[signs == 0] = 1.0
    T = T * signs
    if psd:
        lam = _clamp_eigenvalues(lam, S)
    return EigenDecomposition(T, lam)


def _clamp_eigenvalues(lam: np.ndarray, S: np.ndarray) -> np.ndarray:
    tol = NEG_EIG_TOL * max(1.0, float(np.max(np.abs(S))))
    if lam.size and lam.min() < -tol:
        raise NotPSDError(f"matrix is not positive semidefinite (eigenvalue {lam.min():.3e})")
    return np.where(lam < 0.0, 0.0, lam)


def clamp_psd(S) -> np.ndarray:
    """Symmetrize and remove round-off negative eigenvalues."""
    S = symmetrize(S)
    lam = np.linalg.eigvalsh(S)
    if lam.min() >= 0.0:
        return S
    dec = eig_sym(S, psd=True)
    return symmetrize(dec.reconstruct())


def solve_spd(S, B) -> np.ndarray:
    """Solve ``S X = B`` for symmetric positive definite ``S`` via Cholesky."""
    S = as_symmetric(S)
    B = np.asarray(B, dtype=float)
    try:
        factor = scipy.linalg.cho_factor(S, lower=True, check_finite=True)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(
            "measurement covariance not positive definite"
        ) from None
    return scipy.linalg.cho_solve(factor, B)
