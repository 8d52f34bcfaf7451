"""Gaussian kernel with closed-form first and mixed second derivatives.

    K(x, y)              = exp(-|x - y|^2 / (2 sigma^2))
    d/dx_i K(x, y)       = -(x_i - y_i) / sigma^2 * K(x, y)
    d/dx_i d/dy_j K(x, y) = (delta_ij / sigma^2 - (x_i - y_i)(x_j - y_j) / sigma^4) * K(x, y)

Indices ``i``, ``j`` are zero-based. The scalar functions validate their
inputs; the ``*_matrix`` variants work on point clouds and accept an ``out``
buffer so that Gram assembly does not allocate per call.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError

__all__ = [
    "KernelSpec",
    "kernel_eval",
    "kernel_grad_x",
    "kernel_cross_derivative",
    "kernel_grad_dot",
    "bound_constants",
    "kernel_matrix",
    "grad_x_matrix",
    "grad_dot_matrix",
]

FAMILIES = ("gaussian",)


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family, bandwidth ``sigma`` and input dimension ``dim``."""

    sigma: float
    dim: int
    family: str = "gaussian"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ArgumentError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        sigma = float(self.sigma)
        if not np.isfinite(sigma) or sigma <= 0:
            raise ArgumentError(f"bandwidth must be a positive finite number, got {self.sigma!r}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ArgumentError(f"dimension must be a positive integer, got {self.dim!r}")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "dim", int(self.dim))

    def to_dict(self) -> dict:
        return {"family": self.family, "sigma": self.sigma, "dim": self.dim}


def _point(spec: KernelSpec, x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != spec.dim:
        raise ArgumentError(f"{name} has length {x.shape[0]}, kernel dimension is {spec.dim}")
    if not np.all(np.isfinite(x)):
        raise ArgumentError(f"{name} has non-finite coordinates")
    return x


def _points(spec: KernelSpec, X, name: str) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1 and spec.dim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[1] != spec.dim:
        raise ArgumentError(f"{name} must have shape (m, {spec.dim}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ArgumentError(f"{name} has non-finite entries")
    return X


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x = _point(spec, x, "x")
    y = _point(spec, y, "y")
    r = x - y
    return float(np.exp(-np.dot(r, r) / (2.0 * spec.sigma**2)))


def kernel_grad_x(spec: KernelSpec, x, y) -> np.ndarray:
    """Gradient of ``K(., y)`` evaluated at ``x``."""
    x = _point(spec, x, "x")
    y = _point(spec, y, "y")
    r = x - y
    k = np.exp(-np.dot(r, r) / (2.0 * spec.sigma**2))
    return -r / spec.sigma**2 * k


def kernel_cross_derivative(spec: KernelSpec, x, y, i: int, j: int) -> float:
    """Mixed derivative d^2 K / (dx_i dy_j) at ``(x, y)``."""
    x = _point(spec, x, "x")
    y = _point(spec, y, "y")
    for name, idx in (("i", i), ("j", j)):
        if int(idx) != idx or not 0 <= idx < spec.dim:
            raise ArgumentError(f"index {name}={idx!r} out of range for dimension {spec.dim}")
    r = x - y
    s2 = spec.sigma**2
    k = np.exp(-np.dot(r, r) / (2.0 * s2))
    return float(((1.0 / s2 if i == j else 0.0) - r[i] * r[j] / s2**2) * k)


def kernel_grad_dot(spec: KernelSpec, x, y) -> float:
    """<grad K_x, grad K_y> in the RKHS, i.e. sum_i d^2 K / (dx_i dy_i)."""
    x = _point(spec, x, "x")
    y = _point(spec, y, "y")
    r = x - y
    s2 = spec.sigma**2
    rr = np.dot(r, r)
    return float((spec.dim / s2 - rr / s2**2) * np.exp(-rr / (2.0 * s2)))


def bound_constants(spec: KernelSpec) -> tuple[float, float]:
    """Return ``(sup_x K(x, x), sup_x |grad K_x|^2)``; ``(1, d / sigma^2)`` for the Gaussian."""
    return 1.0, spec.dim / spec.sigma**2


def _sqdist(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    # Direct differences rather than the |x|^2 + |y|^2 - 2xy expansion: exact zeros on the diagonal.
    diff = X[:, None, :] - Y[None, :, :]
    return np.einsum("nmd,nmd->nm", diff, diff)


def kernel_matrix(spec: KernelSpec, X, Y, out: np.ndarray | None = None) -> np.ndarray:
    """``out[a, b] = K(X[a], Y[b])``."""
    X = _points(spec, X, "X")
    Y = _points(spec, Y, "Y")
    if out is None:
        out = np.empty((X.shape[0], Y.shape[0]))
    np.multiply(_sqdist(X, Y), -0.5 / spec.sigma**2, out=out)
    np.exp(out, out=out)
    return out


def grad_x_matrix(spec: KernelSpec, X, Y, out: np.ndarray | None = None) -> np.ndarray:
    """``out[a, j, b] = d/dx_j K(X[a], Y[b])``, derivative in the first argument.

    Reshaping the result to ``(len(X) * d, len(Y))`` gives rows ordered
    ``(a, j)`` with ``j`` varying fastest.
    """
    X = _points(spec, X, "X")
    Y = _points(spec, Y, "Y")
    n, d = X.shape
    if out is None:
        out = np.empty((n, d, Y.shape[0]))
    K = kernel_matrix(spec, X, Y)
    diff = X[:, :, None] - Y.T[None, :, :]
    np.multiply(diff, K[:, None, :], out=out)
    out *= -1.0 / spec.sigma**2
    return out


def grad_dot_matrix(spec: KernelSpec, X, Y, out: np.ndarray | None = None) -> np.ndarray:
    """``out[a, b] = sum_i d^2 K / (dx_i dy_i)`` at ``(X[a], Y[b])``."""
    X = _points(spec, X, "X")
    Y = _points(spec, Y, "Y")
    s2 = spec.sigma**2
    rr = _sqdist(X, Y)
    if out is None:
        out = np.empty_like(rr)
    np.multiply(np.exp(-rr / (2.0 * s2)), spec.dim / s2 - rr / s2**2, out=out)
    return out
