"""Reference spectra and comparison metrics.

Two sources of truth:

* the Ornstein-Uhlenbeck generator ``-f'' + x f'`` whose eigenpairs are
  ``(k, h_k)`` with ``h_k`` the normalized probabilists' Hermite polynomials;
* a conservative finite-difference discretization of ``-f'' + V' f'`` on a
  1-D grid with no-flux boundaries, for any potential.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import ArgumentError, NumericError
from .linalg import fix_signs
from .sampling import PotentialSpec, potential_eval_grad

__all__ = [
    "hermite_value",
    "hermite_spectrum",
    "Grid1D",
    "OracleSpectrum",
    "fd_generator_spectrum",
    "fd_operator",
    "align_error",
    "subspace_distance",
]

BOUNDARY_MASS_RTOL = 1e-8


def hermite_value(k: int, x):
    """``h_k(x) = He_k(x) / sqrt(k!)``, orthonormal under the standard Gaussian.

    Uses the normalized three-term recurrence
    ``h_{k+1} = (x h_k - sqrt(k) h_{k-1}) / sqrt(k + 1)``.
    """
    if int(k) != k or k < 0:
        raise ArgumentError(f"Hermite index must be a non-negative integer, got {k!r}")
    x = np.asarray(x, dtype=float)
    prev, cur = np.zeros_like(x), np.ones_like(x)
    for j in range(int(k)):
        prev, cur = cur, (x * cur - np.sqrt(j) * prev) / np.sqrt(j + 1)
    return float(cur) if cur.ndim == 0 else cur


@dataclass(frozen=True)
class Grid1D:
    """``m`` equally spaced nodes on ``[a, b]``, endpoints included."""

    a: float
    b: float
    m: int

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)) or not self.a < self.b:
            raise ArgumentError(f"grid needs finite a < b, got [{self.a}, {self.b}]")
        if int(self.m) != self.m or self.m < 16:
            raise ArgumentError(f"grid needs at least 16 nodes, got {self.m}")

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.a, self.b, int(self.m))

    @property
    def spacing(self) -> float:
        return (self.b - self.a) / (self.m - 1)


@dataclass(frozen=True)
class OracleSpectrum:
    """Eigenvalues of ``L`` in non-decreasing order, plus eigenfunction evaluators.

    For the finite-difference source, ``values[:, k]`` holds eigenfunction
    ``k`` on ``grid.nodes`` (orthonormal under ``weights``) and evaluation
    elsewhere is piecewise linear.
    """

    eigenvalues: np.ndarray
    source: str
    grid: Grid1D | None = None
    values: np.ndarray | None = None
    weights: np.ndarray | None = None

    def eigenfunction(self, k: int) -> Callable[[np.ndarray], np.ndarray]:
        if not 0 <= k < len(self.eigenvalues):
            raise ArgumentError(f"eigenfunction index {k} out of range [0, {len(self.eigenvalues)})")
        if self.source == "hermite_analytic":
            return lambda x: hermite_value(k, _flat(x))
        nodes, col = self.grid.nodes, self.values[:, k]
        return lambda x: np.interp(_flat(x), nodes, col)


def _flat(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise ArgumentError(f"1-D oracle evaluated on {x.shape[1]}-D points")
        x = x[:, 0]
    return x


def hermite_spectrum(k_max: int) -> OracleSpectrum:
    """Ornstein-Uhlenbeck eigenvalues ``0, 1, ..., k_max - 1`` with Hermite eigenfunctions."""
    return OracleSpectrum(np.arange(int(k_max), dtype=float), "hermite_analytic")


def _log_weights(pot: PotentialSpec, grid: Grid1D, bounded_support: bool):
    x = grid.nodes
    h = grid.spacing
    V, _ = potential_eval_grad(pot, x[:, None])
    Vmid, _ = potential_eval_grad(pot, (0.5 * (x[1:] + x[:-1]))[:, None])
    vmin = min(V.min(), Vmid.min())
    if not bounded_support:
        edge = np.exp(-(np.array([V[0], V[-1]]) - vmin))
        if np.any(edge >= BOUNDARY_MASS_RTOL):
            raise ArgumentError(
                f"grid [{grid.a}, {grid.b}] is too narrow: relative density at the endpoints is "
                f"{edge.max():.2e} (needs < {BOUNDARY_MASS_RTOL:g})")
    log_w = np.log(h) - (V - vmin)
    log_w[[0, -1]] += np.log(0.5)
    log_rho = -(Vmid - vmin)
    log_z = np.logaddexp.reduce(log_w)
    return log_w - log_z, log_rho - log_z, h


def fd_operator(pot: PotentialSpec, grid: Grid1D, bounded_support: bool = False):
    """Mass weights ``w`` and stiffness matrix ``A`` of the discretized generator.

    ``A`` is the tridiagonal matrix of the discrete Dirichlet form
    ``sum_i rho_{i+1/2} (f_{i+1} - f_i)^2 / h`` with ``rho = exp(-V)`` at cell
    midpoints; ``w`` are trapezoid weights of ``exp(-V)``. Both are scaled so
    that ``sum(w) = 1``. The discrete generator is ``diag(1/w) A``.
    """
    log_w, log_rho, h = _log_weights(pot, grid, bounded_support)
    rho = np.exp(log_rho) / h
    m = grid.m
    A = np.zeros((m, m))
    idx = np.arange(m - 1)
    A[idx, idx + 1] = A[idx + 1, idx] = -rho
    A[idx, idx] += rho
    A[idx + 1, idx + 1] += rho
    return np.exp(log_w), A


def fd_generator_spectrum(pot: PotentialSpec, grid: Grid1D, k_max: int,
                          bounded_support: bool = False) -> OracleSpectrum:
    """Smallest ``k_max`` eigenpairs of the finite-difference generator.

    The grid must reach far enough into the tails that ``exp(-V)`` at both
    endpoints is below ``1e-8`` of its maximum. Pass ``bounded_support=True``
    when the endpoints are the true edges of the support (e.g. ``V = 0`` on
    ``[0, 1]``); the no-flux boundary then models reflection and the tail
    test is skipped.
    """
    if int(k_max) != k_max or k_max < 1:
        raise ArgumentError(f"k_max must be a positive integer, got {k_max!r}")
    if k_max > grid.m:
        raise ArgumentError(f"k_max={k_max} exceeds the number of grid nodes {grid.m}")
    log_w, log_rho, h = _log_weights(pot, grid, bounded_support)
    # Symmetrized operator diag(w)^{-1/2} A diag(w)^{-1/2}, assembled in log space.
    off = -np.exp(log_rho - 0.5 * (log_w[:-1] + log_w[1:])) / h
    diag = np.zeros(grid.m)
    diag[:-1] += np.exp(log_rho - log_w[:-1])
    diag[1:] += np.exp(log_rho - log_w[1:])
    diag /= h
    try:
        lam, vec = eigh_tridiagonal(diag, off, select="i", select_range=(0, int(k_max) - 1))
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"tridiagonal eigensolver failed: {exc}") from None
    with np.errstate(over="ignore", invalid="ignore"):
        f = vec * np.exp(-0.5 * log_w)[:, None]
    return OracleSpectrum(lam, "finite_difference", grid=grid, values=fix_signs(f), weights=np.exp(log_w))


def _values(f, points) -> np.ndarray:
    if callable(f):
        return np.asarray(f(points), dtype=float).reshape(-1)
    return np.asarray(f, dtype=float).reshape(-1)


def _check_weights(weights, q: int) -> np.ndarray:
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.shape[0] != q:
        raise ArgumentError(f"{w.shape[0]} weights for {q} evaluation points")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ArgumentError("weights must be finite and non-negative")
    if abs(w.sum() - 1.0) > 1e-9:
        raise ArgumentError(f"weights must sum to 1, got {w.sum()}")
    return w


def align_error(f_est, f_ref, eval_points, weights) -> float:
    """Sign-aligned weighted L2 distance between the two functions after normalization.

    ``f_est``/``f_ref`` are callables evaluated at ``eval_points`` or arrays of
    values already taken there. The result lies in ``[0, 2]``: 0 for
    proportional functions, ``sqrt(2)`` for orthogonal ones.
    """
    pts = np.asarray(eval_points, dtype=float)
    q = pts.shape[0]
    if q < 2:
        raise ArgumentError("align_error needs at least 2 evaluation points")
    w = _check_weights(weights, q)
    a, b = _values(f_est, pts), _values(f_ref, pts)
    if a.shape[0] != q or b.shape[0] != q:
        raise ArgumentError("function values do not match the number of evaluation points")
    na, nb = np.sqrt(np.sum(w * a * a)), np.sqrt(np.sum(w * b * b))
    if not (na > 0 and nb > 0):
        raise ArgumentError("align_error is undefined for a function with zero weighted norm")
    a, b = a / na, b / nb
    return float(min(np.sqrt(np.sum(w * (a - b) ** 2)), np.sqrt(np.sum(w * (a + b) ** 2))))


def _orthonormal_basis(F: np.ndarray, name: str) -> np.ndarray:
    U, s, _ = np.linalg.svd(F, full_matrices=False)
    if s.size == 0 or s[-1] <= 1e-12 * s[0] * max(F.shape):
        raise NumericError(f"{name} does not have full column rank (singular values {s[0]:.3e} ... {s[-1]:.3e})")
    return U


def subspace_distance(F_est, F_ref, weights) -> float:
    """Sine of the largest principal angle between the weighted column spans.

    Computed as ``|(I - P_est) Q_ref|_2`` with orthonormal bases, which stays
    accurate for nearly identical spans.
    """
    A = np.asarray(F_est, dtype=float)
    B = np.asarray(F_ref, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if B.ndim == 1:
        B = B[:, None]
    if A.shape != B.shape:
        raise ArgumentError(f"F_est has shape {A.shape}, F_ref has shape {B.shape}")
    sw = np.sqrt(_check_weights(weights, A.shape[0]))[:, None]
    Qa = _orthonormal_basis(sw * A, "F_est")
    Qb = _orthonormal_basis(sw * B, "F_ref")
    R = Qb - Qa @ (Qa.T @ Qb)
    return float(min(1.0, np.linalg.norm(R, 2)))
