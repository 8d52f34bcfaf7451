"""Dense symmetric eigensolvers.

``sym_eig`` wraps LAPACK's symmetric divide-and-conquer driver and adds a
deterministic ordering and sign convention. ``generalized_sym_eig`` solves
``S psi = mu B psi`` through the symmetric reduction
``W = B^{-1/2} S B^{-1/2}``; the eigenvectors it returns are already mapped
back (``psi = B^{-1/2} u``) and satisfy ``psi^T B psi = 1``.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import ArgumentError, NumericError

__all__ = [
    "EigDecomposition",
    "as_sym_matrix",
    "fix_signs",
    "sym_eig",
    "inv_sqrt_psd",
    "generalized_sym_eig",
]

SYMMETRY_RTOL = 1e-12
PSD_RTOL = 1e-10
DEFAULT_FLOOR_RTOL = 1e-12


class EigDecomposition(NamedTuple):
    """Eigenvalues in non-increasing order and eigenvectors as columns."""

    values: np.ndarray
    vectors: np.ndarray


def as_sym_matrix(A, name: str = "A") -> np.ndarray:
    """Validate a square, finite, numerically symmetric matrix and symmetrize it."""
    A = np.array(A, dtype=float, ndmin=2)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ArgumentError(f"{name} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ArgumentError(f"{name} has non-finite entries")
    scale = np.max(np.abs(A)) if A.size else 0.0
    asym = np.max(np.abs(A - A.T)) if A.size else 0.0
    if asym > SYMMETRY_RTOL * scale:
        raise ArgumentError(f"{name} is not symmetric: max|A - A^T| = {asym:.3e} (scale {scale:.3e})")
    return 0.5 * (A + A.T)


def fix_signs(V: np.ndarray) -> np.ndarray:
    """Flip columns so the entry of largest magnitude is positive (first such entry on ties)."""
    if V.size == 0:
        return V
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.where(V[idx, np.arange(V.shape[1])] < 0, -1.0, 1.0)
    return V * signs


def sym_eig(A) -> EigDecomposition:
    A = as_sym_matrix(A)
    try:
        w, Q = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        off = np.sqrt(np.sum(A**2) - np.sum(np.diag(A) ** 2))
        raise NumericError(f"symmetric eigensolver did not converge (off-diagonal norm {off:.3e}): {exc}") from None
    return EigDecomposition(w[::-1].copy(), fix_signs(Q[:, ::-1]))


def _inv_sqrt_from(eig: EigDecomposition, floor: float) -> np.ndarray:
    w = np.maximum(eig.values, floor)
    Q = eig.vectors
    B = (Q * w**-0.5) @ Q.T
    return 0.5 * (B + B.T)


def _check_psd(eig: EigDecomposition, name: str) -> float:
    """Return the spectral norm; raise if some eigenvalue is materially negative."""
    norm = float(np.max(np.abs(eig.values))) if eig.values.size else 0.0
    lo = float(eig.values[-1]) if eig.values.size else 0.0
    if lo < -PSD_RTOL * norm:
        raise NumericError(f"{name} is not positive semi-definite: smallest eigenvalue {lo:.3e}, norm {norm:.3e}")
    return norm


def inv_sqrt_psd(A, floor: float | None = None) -> np.ndarray:
    """``Q diag(max(w, floor))^{-1/2} Q^T`` for PSD ``A``.

    ``floor`` defaults to ``1e-12 * |A|_2``. Eigenvalues below the floor are
    clipped, not rejected: rank-deficient inputs are expected.
    """
    eig = sym_eig(A)
    norm = _check_psd(eig, "A")
    if floor is None:
        floor = DEFAULT_FLOOR_RTOL * norm
    if not floor > 0:
        if norm == 0:
            raise NumericError("A is the zero matrix; its inverse square root is undefined")
        raise ArgumentError(f"floor must be positive, got {floor}")
    return _inv_sqrt_from(eig, floor)


def generalized_sym_eig(S, B) -> EigDecomposition:
    """All pairs of ``S psi = mu B psi`` with ``mu`` non-increasing and ``psi^T B psi = 1``.

    ``B`` must be strictly positive definite; ``S`` is expected PSD but only
    needs to be symmetric.
    """
    S = as_sym_matrix(S, "S")
    B = as_sym_matrix(B, "B")
    if S.shape != B.shape:
        raise ArgumentError(f"S has shape {S.shape} but B has shape {B.shape}")
    eb = sym_eig(B)
    if eb.values.size and eb.values[-1] <= 0:
        raise NumericError(f"B is not positive definite: smallest eigenvalue {eb.values[-1]:.3e}")
    B_isqrt = _inv_sqrt_from(eb, 0.0)
    W = B_isqrt @ S @ B_isqrt
    ew = sym_eig(0.5 * (W + W.T))
    psi = B_isqrt @ ew.vectors
    return EigDecomposition(ew.values, fix_signs(psi))
