"""Data generators: i.i.d. draws from simple measures and overdamped Langevin trajectories.

Randomness comes from :func:`make_rng`, a Philox (counter-based) generator
keyed by ``(seed, stream)``. Each stage of a pipeline draws from its own
stream id, so adding draws in one stage never shifts another.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import ArgumentError, DivergenceError, FormatError

__all__ = [
    "STREAM_SAMPLING",
    "STREAM_ANCHORS",
    "STREAM_RFF",
    "STREAM_LANGEVIN",
    "make_rng",
    "PotentialSpec",
    "potential_eval_grad",
    "StandardGaussian",
    "Gaussian",
    "GaussianMixture",
    "UniformInterval",
    "Dataset",
    "sample_iid",
    "langevin_sample",
    "write_csv",
    "read_csv",
]

STREAM_SAMPLING = 0
STREAM_ANCHORS = 1
STREAM_RFF = 2
STREAM_LANGEVIN = 3

Stream = Union[int, Sequence[int]]


def make_rng(seed: int, stream: Stream = STREAM_SAMPLING) -> np.random.Generator:
    """Independent reproducible generator for the pair ``(seed, stream)``."""
    if int(seed) != seed or seed < 0:
        raise ArgumentError(f"seed must be a non-negative integer, got {seed!r}")
    key = (int(stream),) if np.isscalar(stream) else tuple(int(s) for s in stream)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=key)))


# ---------------------------------------------------------------------------
# Potentials
# ---------------------------------------------------------------------------

POTENTIAL_FAMILIES = ("quadratic", "double_well", "gaussian_mixture", "flat")


@dataclass(frozen=True)
class PotentialSpec:
    """Potential ``V`` of a Gibbs measure ``exp(-V(x)) dx``.

    * ``quadratic``: ``V = |x|^2 / 2`` (standard Gaussian, Ornstein-Uhlenbeck generator).
    * ``double_well``: ``V = sum_i a x_i^4 / 4 - b x_i^2 / 2``.
    * ``gaussian_mixture``: ``V = -log sum_m w_m N(x; mean_m, diag(var_m))``.
    * ``flat``: ``V = 0``; only meaningful on a bounded interval (uniform measure).
    """

    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in POTENTIAL_FAMILIES:
            raise ArgumentError(f"unknown potential family {self.family!r}; expected one of {POTENTIAL_FAMILIES}")
        if self.family == "gaussian_mixture":
            mix = GaussianMixture(self.params["weights"], self.params["means"], self.params["cov_diags"])
            object.__setattr__(self, "params", {"weights": mix.weights.tolist(), "means": mix.means.tolist(),
                                                "cov_diags": mix.cov_diags.tolist()})

    @classmethod
    def quadratic(cls) -> "PotentialSpec":
        return cls("quadratic")

    @classmethod
    def double_well(cls, a: float = 1.0, b: float = 1.0) -> "PotentialSpec":
        return cls("double_well", {"a": float(a), "b": float(b)})

    @classmethod
    def gaussian_mixture(cls, weights, means, cov_diags) -> "PotentialSpec":
        return cls("gaussian_mixture", {"weights": weights, "means": means, "cov_diags": cov_diags})

    @classmethod
    def flat(cls) -> "PotentialSpec":
        return cls("flat")

    @property
    def dim(self) -> int | None:
        """Fixed dimension, or ``None`` if the family works in any dimension."""
        if self.family == "gaussian_mixture":
            return len(self.params["means"][0])
        return None

    def to_dict(self) -> dict:
        return {"family": self.family, "params": dict(self.params)}


def potential_eval_grad(spec: PotentialSpec, x) -> tuple:
    """Return ``(V(x), grad V(x))``.

    ``x`` may be a single point of shape ``(d,)`` (scalar ``V``, vector
    gradient) or a batch of shape ``(m, d)`` (vector ``V``, ``(m, d)`` gradient).
    """
    if not isinstance(spec, PotentialSpec):
        raise ArgumentError(f"expected a PotentialSpec, got {type(spec).__name__}")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.ndim != 2:
        raise ArgumentError(f"x must be a point or a matrix of points, got shape {x.shape}")
    if not np.all(np.isfinite(X)):
        raise ArgumentError("x has non-finite coordinates")

    if spec.family == "quadratic":
        V = 0.5 * np.einsum("md,md->m", X, X)
        G = X.copy()
    elif spec.family == "flat":
        V = np.zeros(X.shape[0])
        G = np.zeros_like(X)
    elif spec.family == "double_well":
        a, b = spec.params.get("a", 1.0), spec.params.get("b", 1.0)
        V = np.sum(a * X**4 / 4.0 - b * X**2 / 2.0, axis=1)
        G = a * X**3 - b * X
    else:
        V, G = _mixture_potential(spec.params, X)

    if single:
        return float(V[0]), G[0]
    return V, G


def _mixture_potential(params: dict, X: np.ndarray):
    w = np.asarray(params["weights"])
    mu = np.asarray(params["means"])
    var = np.asarray(params["cov_diags"])
    if X.shape[1] != mu.shape[1]:
        raise ArgumentError(f"point dimension {X.shape[1]} does not match mixture dimension {mu.shape[1]}")
    diff = X[:, None, :] - mu[None, :, :]
    logc = np.log(w) - 0.5 * np.sum(np.log(2 * np.pi * var), axis=1)
    logp = logc[None, :] - 0.5 * np.sum(diff**2 / var[None], axis=2)
    top = logp.max(axis=1, keepdims=True)
    resp = np.exp(logp - top)
    total = resp.sum(axis=1, keepdims=True)
    V = -(top[:, 0] + np.log(total[:, 0]))
    resp /= total
    G = np.einsum("mk,mkd->md", resp, diff / var[None])
    return V, G


# ---------------------------------------------------------------------------
# i.i.d. distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StandardGaussian:
    dim: int = 1

    def __post_init__(self):
        _check_dim(self.dim)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.standard_normal((n, self.dim))

    def potential(self) -> PotentialSpec:
        return PotentialSpec.quadratic()

    def to_dict(self) -> dict:
        return {"kind": "standard_gaussian", "dim": self.dim}


@dataclass(frozen=True)
class Gaussian:
    mean: tuple
    cov_diag: tuple

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_1d(np.asarray(self.cov_diag, dtype=float))
        if mean.ndim != 1 or mean.shape != cov.shape:
            raise ArgumentError("mean and cov_diag must be vectors of equal length")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov)) and np.all(cov > 0)):
            raise ArgumentError("mean must be finite and cov_diag strictly positive")
        object.__setattr__(self, "mean", tuple(mean.tolist()))
        object.__setattr__(self, "cov_diag", tuple(cov.tolist()))

    @property
    def dim(self) -> int:
        return len(self.mean)

    def draw(self, rng, n):
        return np.asarray(self.mean) + np.sqrt(np.asarray(self.cov_diag)) * rng.standard_normal((n, self.dim))

    def potential(self) -> PotentialSpec:
        return PotentialSpec.gaussian_mixture([1.0], [list(self.mean)], [list(self.cov_diag)])

    def to_dict(self):
        return {"kind": "gaussian", "mean": list(self.mean), "cov_diag": list(self.cov_diag)}


class GaussianMixture:
    """Mixture of axis-aligned Gaussians."""

    def __init__(self, weights, means, cov_diags):
        w = np.asarray(weights, dtype=float).reshape(-1)
        mu = np.asarray(means, dtype=float)
        var = np.asarray(cov_diags, dtype=float)
        if mu.ndim == 1:
            mu = mu[:, None]
        if var.ndim == 1:
            var = var[:, None]
        if mu.shape[0] != w.shape[0] or var.shape != mu.shape:
            raise ArgumentError("weights, means and cov_diags must describe the same number of components")
        if np.any(w < 0) or not np.isclose(w.sum(), 1.0, rtol=0, atol=1e-12):
            raise ArgumentError("mixture weights must be non-negative and sum to 1")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(var)) and np.all(var > 0)):
            raise ArgumentError("means must be finite and cov_diags strictly positive")
        self.weights, self.means, self.cov_diags = w, mu, var

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def draw(self, rng, n):
        comp = rng.choice(len(self.weights), size=n, p=self.weights)
        z = rng.standard_normal((n, self.dim))
        return self.means[comp] + np.sqrt(self.cov_diags[comp]) * z

    def potential(self) -> PotentialSpec:
        return PotentialSpec.gaussian_mixture(self.weights, self.means, self.cov_diags)

    def to_dict(self):
        return {"kind": "gaussian_mixture", "weights": self.weights.tolist(), "means": self.means.tolist(),
                "cov_diags": self.cov_diags.tolist()}

    def __eq__(self, other):
        return isinstance(other, GaussianMixture) and self.to_dict() == other.to_dict()


@dataclass(frozen=True)
class UniformInterval:
    """Uniform on ``[a, b]^dim``."""

    a: float = 0.0
    b: float = 1.0
    dim: int = 1

    def __post_init__(self):
        _check_dim(self.dim)
        if not (math.isfinite(self.a) and math.isfinite(self.b)) or self.b <= self.a:
            raise ArgumentError(f"uniform interval needs finite a < b, got a={self.a}, b={self.b}")

    def draw(self, rng, n):
        return rng.uniform(self.a, self.b, size=(n, self.dim))

    def potential(self) -> PotentialSpec:
        return PotentialSpec.flat()

    def to_dict(self):
        return {"kind": "uniform_interval", "a": self.a, "b": self.b, "dim": self.dim}


Distribution = Union[StandardGaussian, Gaussian, GaussianMixture, UniformInterval]


def distribution_from_dict(d: dict) -> Distribution:
    kind = d.get("kind")
    if kind == "standard_gaussian":
        return StandardGaussian(int(d.get("dim", 1)))
    if kind == "gaussian":
        return Gaussian(d["mean"], d["cov_diag"])
    if kind == "gaussian_mixture":
        return GaussianMixture(d["weights"], d["means"], d["cov_diags"])
    if kind == "uniform_interval":
        return UniformInterval(float(d["a"]), float(d["b"]), int(d.get("dim", 1)))
    raise ArgumentError(f"unknown distribution kind {kind!r}")


def _check_dim(dim):
    if int(dim) != dim or dim < 1:
        raise ArgumentError(f"dimension must be a positive integer, got {dim!r}")


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------


@dataclass
class Dataset:
    """``n x d`` sample matrix plus where it came from."""

    points: np.ndarray
    source: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ArgumentError(f"points must be a non-empty n x d matrix, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ArgumentError("dataset contains non-finite entries")
        self.points = pts

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def _check_count(n, name="n"):
    if int(n) != n or n < 1:
        raise ArgumentError(f"{name} must be a positive integer, got {n!r}")
    return int(n)


def sample_iid(dist: Distribution, n: int, seed: int, stream: Stream = STREAM_SAMPLING) -> Dataset:
    """Draw ``n`` i.i.d. points from ``dist``; a pure function of ``(dist, n, seed, stream)``."""
    n = _check_count(n)
    pts = dist.draw(make_rng(seed, stream), n)
    return Dataset(pts, source={"kind": "iid", "distribution": dist.to_dict(), "stream": _stream_repr(stream)},
                   seed=int(seed))


def _stream_repr(stream):
    return int(stream) if np.isscalar(stream) else [int(s) for s in stream]


def langevin_sample(pot: PotentialSpec, x0, dt: float, n: int, burn_in: int | None = None,
                    thin: int | None = None, seed: int = 0, stream: Stream = STREAM_LANGEVIN) -> Dataset:
    """Euler-Maruyama discretization of ``dX = -grad V(X) dt + sqrt(2) dB``.

    After ``burn_in`` updates, the state is emitted once every ``thin``
    updates until ``n`` points are collected: emission ``k`` (1-based) is the
    state after ``burn_in + k * thin`` updates. Defaults are
    ``burn_in = round(10 / dt)`` and ``thin = max(1, round(1 / dt))``.
    """
    dt = float(dt)
    if not math.isfinite(dt) or dt <= 0:
        raise ArgumentError(f"dt must be positive, got {dt}")
    n = _check_count(n)
    burn_in = int(round(10.0 / dt)) if burn_in is None else int(burn_in)
    thin = max(1, int(round(1.0 / dt))) if thin is None else thin
    thin = _check_count(thin, "thin")
    if burn_in < 0:
        raise ArgumentError(f"burn_in must be non-negative, got {burn_in}")
    x = np.array(x0, dtype=float).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise ArgumentError("x0 has non-finite coordinates")
    if pot.dim is not None and pot.dim != x.shape[0]:
        raise ArgumentError(f"x0 has dimension {x.shape[0]}, potential has dimension {pot.dim}")

    if pot.family == "quadratic":
        grad = lambda z: z  # noqa: E731
    else:
        grad = lambda z: potential_eval_grad(pot, z)[1]  # noqa: E731

    rng = make_rng(seed, stream)
    d = x.shape[0]
    total = burn_in + n * thin
    out = np.empty((n, d))
    scale = math.sqrt(2.0 * dt)
    block = 4096
    step = 0
    emitted = 0
    # Overflow is caught as divergence below; silence numpy's warning for it.
    with np.errstate(over="ignore", invalid="ignore"):
        while step < total:
            m = min(block, total - step)
            noise = rng.standard_normal((m, d))
            for r in range(m):
                x = x - dt * grad(x) + scale * noise[r]
                step += 1
                if not np.all(np.isfinite(x)):
                    raise DivergenceError(step, f"Langevin trajectory became non-finite at step {step}")
                if step > burn_in and (step - burn_in) % thin == 0:
                    out[emitted] = x
                    emitted += 1
    source = {"kind": "langevin", "potential": pot.to_dict(), "x0": np.asarray(x0, dtype=float).reshape(-1).tolist(),
              "dt": dt, "burn_in": burn_in, "thin": thin, "stream": _stream_repr(stream)}
    return Dataset(out, source=source, seed=int(seed))


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def write_csv(data: Dataset | np.ndarray, path_or_buf) -> None:
    """Header ``x1,...,xd``, one row per sample, round-trip exact decimals, LF endings."""
    pts = data.points if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{j + 1}" for j in range(pts.shape[1])])
    for row in pts:
        w.writerow([repr(float(v)) for v in row])
    text = buf.getvalue()
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def read_csv(path, source: dict | None = None) -> Dataset:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError("empty file", "header")
    header = [h.strip() for h in rows[0]]
    expected = [f"x{j + 1}" for j in range(len(header))]
    if header != expected:
        raise FormatError(f"expected header {','.join(expected)}, got {','.join(header)}", "header")
    body = [r for r in rows[1:] if r]
    if not body:
        raise FormatError("no data rows", "rows")
    try:
        pts = np.array([[float(v) for v in r] for r in body])
    except ValueError as exc:
        raise FormatError(str(exc), "rows") from None
    if pts.ndim != 2 or pts.shape[1] != len(header):
        raise FormatError("ragged rows", "rows")
    try:
        return Dataset(pts, source=source or {"kind": "file", "path": str(path)})
    except ArgumentError as exc:
        raise FormatError(str(exc), "rows") from None
