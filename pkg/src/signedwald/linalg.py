"""Symmetric matrix primitives built on the spectral decomposition.

All square roots are the unique symmetric positive semidefinite root. The
cone used by the signed Wald statistic is defined through the rows of this
root, so the same convention must be used everywhere.
"""

from __future__ import annotations

import numpy as np

from .exceptions import DimensionMismatch, NonFiniteInput, NotPSD, Singular, ZeroVariance

TOL_PSD = 1e-12
SYM_TOL = 1e-6


def as_symmetric(m, name: str = "matrix") -> np.ndarray:
    """Validate ``m`` as a finite, square, exactly symmetric float matrix.

    Asymmetry up to ``SYM_TOL`` relative to the largest entry (printed
    matrices are often rounded to 7 digits) is removed by averaging with the
    transpose; anything larger is rejected.
    """
    a = np.array(m, dtype=float, copy=True)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {a.shape}")
    if a.shape[0] == 0:
        raise DimensionMismatch(f"{name} is empty")
    if not np.all(np.isfinite(a)):
        raise NonFiniteInput(f"{name} has non-finite entries")
    scale = np.max(np.abs(a)) or 1.0
    if np.max(np.abs(a - a.T)) > SYM_TOL * scale:
        raise DimensionMismatch(f"{name} is not symmetric")
    return 0.5 * (a + a.T)


def _eigh(m, tol_psd: float = TOL_PSD):
    a = as_symmetric(m)
    vals, vecs = np.linalg.eigh(a)
    lam_max = max(vals[-1], 0.0)
    if vals[0] < -tol_psd * lam_max or (lam_max == 0.0 and vals[0] < 0.0):
        raise NotPSD(f"smallest eigenvalue {vals[0]:.3e} below -{tol_psd:g} * {lam_max:.3e}")
    return np.clip(vals, 0.0, None), vecs, lam_max


def _assemble(vecs, diag):
    out = (vecs * diag) @ vecs.T
    return 0.5 * (out + out.T)


def sym_sqrt(m, tol_psd: float = TOL_PSD) -> np.ndarray:
    """Symmetric PSD square root; small negative eigenvalues are clipped to zero.

    Examples
    --------
    >>> sym_sqrt(np.diag([4.0, 9.0]))
    array([[2., 0.],
           [0., 3.]])
    """
    vals, vecs, _ = _eigh(m, tol_psd)
    return _assemble(vecs, np.sqrt(vals))


def sym_inv_sqrt(m, tol_psd: float = TOL_PSD) -> np.ndarray:
    """Inverse of the symmetric square root, ``S`` with ``S @ m @ S == I``."""
    vals, vecs, lam_max = _eigh(m, tol_psd)
    if vals[0] <= tol_psd * lam_max:
        raise Singular(f"smallest eigenvalue {vals[0]:.3e} too small relative to {lam_max:.3e}")
    return _assemble(vecs, 1.0 / np.sqrt(vals))


def sym_inv(m, tol_psd: float = TOL_PSD) -> np.ndarray:
    vals, vecs, lam_max = _eigh(m, tol_psd)
    if vals[0] <= tol_psd * lam_max:
        raise Singular(f"smallest eigenvalue {vals[0]:.3e} too small relative to {lam_max:.3e}")
    return _assemble(vecs, 1.0 / vals)


def check_psd(m, tol_psd: float = TOL_PSD) -> np.ndarray:
    """Return the symmetrised matrix, raising ``NotPSD`` on a negative eigenvalue."""
    _eigh(m, tol_psd)
    return as_symmetric(m)


def correlation(m) -> np.ndarray:
    """Correlation matrix of a covariance matrix."""
    a = as_symmetric(m)
    d = np.diag(a)
    if np.any(d <= 0):
        raise ZeroVariance("covariance has a non-positive diagonal entry")
    sd = np.sqrt(d)
    rho = a / np.outer(sd, sd)
    rho = np.clip(0.5 * (rho + rho.T), -1.0, 1.0)
    np.fill_diagonal(rho, 1.0)
    return rho
