"""Regularized RKHS estimator of the diffusion operator's spectrum.

Functions are represented in a finite dictionary: either ``p`` kernel
sections ``K(a_l, .)`` at anchors (Nystrom) or ``p`` random Fourier
features. With ``S`` the ``n x p`` matrix of dictionary values on the data
and ``Dstack`` the ``(n d) x p`` matrix of their gradients, the estimator
solves

    Sigma_p psi = mu (Delta_p + lambda I) psi,
    Sigma_p = c S^T S,   Delta_p = c Dstack^T Dstack,

with ``c = 1/n`` ("operator" normalization) or ``c = 1`` ("gram"). Each
``mu_k`` estimates an eigenvalue of the inverse generator, so ``1 / mu_k``
estimates an eigenvalue of ``L = -Laplacian + grad V . grad``. The
eigenfunction is ``f_k(x) = sum_l Psi_k[l] phi_l(x)`` where ``Psi_k`` is the
generalized eigenvector, rescaled to unit empirical L2 norm.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import __version__
from .errors import ArgumentError, FormatError, NumericError, UnsupportedVersionError
from .kernel import KernelSpec, grad_x_matrix, kernel_matrix
from .linalg import fix_signs, generalized_sym_eig
from .sampling import STREAM_ANCHORS, STREAM_RFF, Dataset, make_rng

__all__ = [
    "EstimatorConfig",
    "GramBundle",
    "RffFeatures",
    "SpectralModel",
    "assemble_nystrom",
    "sample_rff",
    "assemble_rff",
    "assemble",
    "fit",
    "fit_dataset",
    "eval_functions",
    "estimated_operator_eigenvalues",
    "save_model",
    "load_model",
    "model_to_dict",
    "model_from_dict",
    "FORMAT_VERSION",
]

FORMAT_VERSION = 1
MODES = ("nystrom", "rff")
NORMALIZATIONS = ("operator", "gram")
ANCHOR_POLICIES = ("first_p", "uniform")
# Modes with mu below this fraction of the top one are numerically zero.
POSITIVE_RTOL = 1e-12


@dataclass(frozen=True)
class EstimatorConfig:
    """Estimator settings.

    ``anchor_policy="uniform"`` draws ``p`` anchors without replacement using
    ``anchor_seed``. ``center`` subtracts the training mean of each
    dictionary function, projecting the constant out of ``Sigma_p``.
    ``rff_literal_sum`` reproduces the literal ``(sum_j D^j)^T (sum_j D^j)``
    form for comparison only; it is not a supported estimator.
    """

    lam: float
    p: int
    mode: str = "nystrom"
    normalization: str = "operator"
    anchor_policy: str = "first_p"
    anchor_seed: int = 0
    center: bool = False
    rff_literal_sum: bool = False

    def __post_init__(self):
        lam = float(self.lam)
        if not math.isfinite(lam) or lam <= 0:
            raise ArgumentError(f"lambda must be a positive finite number, got {self.lam!r}")
        object.__setattr__(self, "lam", lam)
        if int(self.p) != self.p or self.p < 1:
            raise ArgumentError(f"p must be a positive integer, got {self.p!r}")
        object.__setattr__(self, "p", int(self.p))
        if self.mode not in MODES:
            raise ArgumentError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.normalization not in NORMALIZATIONS:
            raise ArgumentError(f"normalization must be one of {NORMALIZATIONS}, got {self.normalization!r}")
        if self.anchor_policy not in ANCHOR_POLICIES:
            raise ArgumentError(f"anchor_policy must be one of {ANCHOR_POLICIES}, got {self.anchor_policy!r}")

    def to_dict(self) -> dict:
        return {"lam": self.lam, "p": self.p, "mode": self.mode, "normalization": self.normalization,
                "anchor_policy": self.anchor_policy, "anchor_seed": self.anchor_seed, "center": self.center,
                "rff_literal_sum": self.rff_literal_sum}


@dataclass(frozen=True)
class RffFeatures:
    """Random Fourier features ``phi_l(x) = sqrt(2/p) cos(w_l . x + b_l)``."""

    frequencies: np.ndarray
    phases: np.ndarray
    sigma: float
    seed: int | None = None

    def __post_init__(self):
        W = np.array(self.frequencies, dtype=float, ndmin=2)
        b = np.array(self.phases, dtype=float).reshape(-1)
        if W.shape[0] != b.shape[0]:
            raise ArgumentError(f"{W.shape[0]} frequencies but {b.shape[0]} phases")
        W.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "frequencies", W)
        object.__setattr__(self, "phases", b)

    @property
    def p(self) -> int:
        return self.frequencies.shape[0]

    @property
    def dim(self) -> int:
        return self.frequencies.shape[1]

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1 and self.dim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ArgumentError(f"points must have shape (m, {self.dim}), got {X.shape}")
        return X

    def values(self, X) -> np.ndarray:
        X = self._check(X)
        return math.sqrt(2.0 / self.p) * np.cos(X @ self.frequencies.T + self.phases)

    def gradients(self, X) -> np.ndarray:
        """``out[a, j, l] = d/dx_j phi_l(X[a])``."""
        X = self._check(X)
        s = -math.sqrt(2.0 / self.p) * np.sin(X @ self.frequencies.T + self.phases)
        return s[:, None, :] * self.frequencies.T[None, :, :]


@dataclass
class GramBundle:
    """Dictionary matrices on the training data and the assembled ``p x p`` pair."""

    S: np.ndarray
    Dstack: np.ndarray
    sigma_p: np.ndarray
    delta_p: np.ndarray
    normalization: str
    mode: str
    kernel: KernelSpec
    anchors: np.ndarray | None = None
    anchor_indices: np.ndarray | None = None
    features: RffFeatures | None = None
    feature_mean: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.S.shape[0]

    @property
    def p(self) -> int:
        return self.S.shape[1]


def _check_data(data: Dataset, dim: int) -> np.ndarray:
    if not isinstance(data, Dataset):
        data = Dataset(data)
    if data.dim != dim:
        raise ArgumentError(f"data has dimension {data.dim}, expected {dim}")
    return data.points


def _gram_pair(S: np.ndarray, D: np.ndarray, normalization: str, center: bool, n: int):
    mean = S.mean(axis=0) if center else np.zeros(S.shape[1])
    Sc = S - mean if center else S
    c = 1.0 / n if normalization == "operator" else 1.0
    sigma_p = c * (Sc.T @ Sc)
    delta_p = c * (D.T @ D)
    return 0.5 * (sigma_p + sigma_p.T), 0.5 * (delta_p + delta_p.T), mean


def select_anchors(n: int, cfg: EstimatorConfig) -> np.ndarray:
    if cfg.p > n:
        raise ArgumentError(f"p exceeds n: p={cfg.p}, n={n}")
    if cfg.anchor_policy == "first_p":
        return np.arange(cfg.p)
    idx = make_rng(cfg.anchor_seed, STREAM_ANCHORS).choice(n, size=cfg.p, replace=False)
    return np.sort(idx)


def assemble_nystrom(data: Dataset, cfg: EstimatorConfig, kernel: KernelSpec) -> GramBundle:
    """Nystrom dictionary ``{K(a_l, .)}`` with anchors drawn from the data."""
    if cfg.mode != "nystrom":
        raise ArgumentError(f"assemble_nystrom needs mode='nystrom', got {cfg.mode!r}")
    X = _check_data(data, kernel.dim)
    n, d = X.shape
    idx = select_anchors(n, cfg)
    A = X[idx]
    S = kernel_matrix(kernel, X, A)
    D = grad_x_matrix(kernel, X, A).reshape(n * d, cfg.p)
    sigma_p, delta_p, mean = _gram_pair(S, D, cfg.normalization, cfg.center, n)
    return GramBundle(S, D, sigma_p, delta_p, cfg.normalization, "nystrom", kernel,
                      anchors=A.copy(), anchor_indices=idx, feature_mean=mean)


def sample_rff(kernel: KernelSpec, p: int, seed: int) -> RffFeatures:
    """Frequencies from the Gaussian kernel's spectral measure ``N(0, I / sigma^2)``, phases ``U[0, 2 pi)``."""
    if int(p) != p or p < 1:
        raise ArgumentError(f"p must be a positive integer, got {p!r}")
    rng = make_rng(seed, STREAM_RFF)
    W = rng.standard_normal((int(p), kernel.dim)) / kernel.sigma
    b = rng.uniform(0.0, 2.0 * np.pi, size=int(p))
    return RffFeatures(W, b, kernel.sigma, int(seed))


def assemble_rff(data: Dataset, feats: RffFeatures, cfg: EstimatorConfig) -> GramBundle:
    """Random-feature dictionary.

    ``Delta_p = sum_j (D^j)^T D^j`` with ``D^j`` the per-coordinate
    derivative blocks, i.e. the same ``Dstack^T Dstack`` as in Nystrom mode.
    """
    if cfg.mode != "rff":
        raise ArgumentError(f"assemble_rff needs mode='rff', got {cfg.mode!r}")
    X = _check_data(data, feats.dim)
    n, d = X.shape
    S = feats.values(X)
    G = feats.gradients(X)
    D = G.sum(axis=1) if cfg.rff_literal_sum else G.reshape(n * d, feats.p)
    sigma_p, delta_p, mean = _gram_pair(S, D, cfg.normalization, cfg.center, n)
    kernel = KernelSpec(feats.sigma, d)
    return GramBundle(S, G.reshape(n * d, feats.p), sigma_p, delta_p, cfg.normalization, "rff", kernel,
                      features=feats, feature_mean=mean)


def assemble(data: Dataset, cfg: EstimatorConfig, kernel: KernelSpec, rff_seed: int = 0) -> GramBundle:
    if cfg.mode == "nystrom":
        return assemble_nystrom(data, cfg, kernel)
    return assemble_rff(data, sample_rff(kernel, cfg.p, rff_seed), cfg)


@dataclass(frozen=True)
class SpectralModel:
    """Fitted eigenpairs and everything needed to evaluate the eigenfunctions.

    ``coefficients[:, k]`` holds ``Psi_k`` (already divided by
    ``norm_constants[k]``); ``eigenvalues`` are non-increasing.
    ``constant_mode`` is the index of the near-constant eigenfunction, or
    ``None`` when the fit was centered.
    """

    mode: str
    kernel: KernelSpec
    lam: float
    normalization: str
    eigenvalues: np.ndarray
    coefficients: np.ndarray
    norm_constants: np.ndarray
    feature_mean: np.ndarray
    anchors: np.ndarray | None = None
    features: RffFeatures | None = None
    center: bool = False
    constant_mode: int | None = None
    n_train: int = 0
    seed_provenance: dict = field(default_factory=dict)
    run_config: dict | None = None

    def __post_init__(self):
        for name in ("eigenvalues", "coefficients", "norm_constants", "feature_mean", "anchors"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.array(arr, dtype=float)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)

    @property
    def p(self) -> int:
        return self.coefficients.shape[0]

    @property
    def n_modes(self) -> int:
        return self.coefficients.shape[1]

    def dictionary(self, X) -> np.ndarray:
        """Centered dictionary values ``phi_l(x) - mean_l`` at the query points."""
        if self.mode == "nystrom":
            Phi = kernel_matrix(self.kernel, X, self.anchors)
        else:
            Phi = self.features.values(X)
        return Phi - self.feature_mean


def fit(bundle: GramBundle, cfg: EstimatorConfig, data: Dataset | None = None,
        n_components: int | None = None, seed_provenance: dict | None = None) -> SpectralModel:
    """Solve the regularized generalized eigenproblem and package the eigenfunctions.

    ``n_components`` keeps only the leading modes (all ``p`` by default).
    """
    if data is not None and (data.n != bundle.n):
        raise ArgumentError(f"bundle was assembled on {bundle.n} points, data has {data.n}")
    if bundle.mode != cfg.mode:
        raise ArgumentError(f"bundle mode {bundle.mode!r} does not match config mode {cfg.mode!r}")
    p = bundle.p
    B = bundle.delta_p + cfg.lam * np.eye(p)
    if not np.all(np.isfinite(B)) or not np.all(np.isfinite(bundle.sigma_p)):
        raise NumericError("Gram matrices contain non-finite entries")
    mu, psi = generalized_sym_eig(bundle.sigma_p, B)

    keep = p if n_components is None else int(n_components)
    if not 1 <= keep <= p:
        raise ArgumentError(f"n_components must be in [1, {p}], got {n_components}")
    mu, psi = mu[:keep], psi[:, :keep]

    Sc = bundle.S - bundle.feature_mean if cfg.center else bundle.S
    F = Sc @ psi
    scale = np.sqrt(np.mean(F**2, axis=0))
    ok = np.isfinite(scale) & (scale > 0)
    scale = np.where(ok, scale, 1.0)
    coef = fix_signs(psi / scale)

    constant = None
    if not cfg.center:
        F = Sc @ coef
        ms = np.mean(F**2, axis=0)
        ratio = np.var(F, axis=0) / np.where(ms > 0, ms, 1.0)
        live = mu > POSITIVE_RTOL * max(mu[0], 0.0)
        if np.any(live):
            constant = int(np.flatnonzero(live)[np.argmin(ratio[live])])

    return SpectralModel(
        mode=bundle.mode,
        kernel=bundle.kernel,
        lam=cfg.lam,
        normalization=cfg.normalization,
        eigenvalues=mu,
        coefficients=coef,
        norm_constants=scale,
        feature_mean=bundle.feature_mean if cfg.center else np.zeros(p),
        anchors=bundle.anchors,
        features=bundle.features,
        center=cfg.center,
        constant_mode=constant,
        n_train=bundle.n,
        seed_provenance=dict(seed_provenance or {}),
    )


def fit_dataset(data: Dataset, cfg: EstimatorConfig, kernel: KernelSpec, rff_seed: int = 0,
                n_components: int | None = None) -> SpectralModel:
    """Assemble and fit in one call."""
    bundle = assemble(data, cfg, kernel, rff_seed=rff_seed)
    prov = {"data_seed": data.seed}
    if cfg.mode == "nystrom" and cfg.anchor_policy == "uniform":
        prov["anchor_seed"] = cfg.anchor_seed
    if cfg.mode == "rff":
        prov["rff_seed"] = rff_seed
    return fit(bundle, cfg, data, n_components=n_components, seed_provenance=prov)


def eval_functions(model: SpectralModel, ks: Sequence[int], query) -> np.ndarray:
    """Values of eigenfunctions ``ks`` (zero-based) at ``query``; shape ``(q, len(ks))``."""
    ks = np.atleast_1d(np.asarray(ks))
    if ks.size and (ks.dtype.kind not in "iu" or ks.min() < 0 or ks.max() >= model.n_modes):
        raise ArgumentError(f"eigenfunction indices must lie in [0, {model.n_modes}), got {ks.tolist()}")
    return model.dictionary(query) @ model.coefficients[:, ks]


def estimated_operator_eigenvalues(model: SpectralModel, skip_constant: bool = True) -> np.ndarray:
    """``1 / mu_k`` over the numerically positive ``mu_k``, in non-decreasing order.

    With ``skip_constant`` the detected constant mode is dropped, so the first
    entry estimates the spectral gap (the inverse Poincare constant).
    """
    mu = model.eigenvalues
    top = mu.max() if mu.size else 0.0
    if not top > 0:
        raise NumericError("degenerate fit: no positive eigenvalue")
    keep = mu > POSITIVE_RTOL * top
    if skip_constant and model.constant_mode is not None:
        keep[model.constant_mode] = False
    if not np.any(keep):
        raise NumericError("degenerate fit: no eigenvalue left after removing the constant mode")
    return 1.0 / mu[keep]


def nonconstant_modes(model: SpectralModel) -> np.ndarray:
    """Indices of the numerically positive modes other than the constant one, by decreasing ``mu``."""
    mu = model.eigenvalues
    keep = mu > POSITIVE_RTOL * max(mu.max(), 0.0)
    if model.constant_mode is not None:
        keep[model.constant_mode] = False
    return np.flatnonzero(keep)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def model_to_dict(model: SpectralModel) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "tool_version": __version__,
        "mode": model.mode,
        "kernel": model.kernel.to_dict(),
        "lambda": model.lam,
        "normalization": model.normalization,
        "center": model.center,
        "n_train": model.n_train,
        "eigenvalues": model.eigenvalues.tolist(),
        "coefficients": model.coefficients.T.tolist(),
        "norm_constants": model.norm_constants.tolist(),
        "feature_mean": model.feature_mean.tolist(),
        "constant_mode": model.constant_mode,
        "seed_provenance": model.seed_provenance,
    }
    if model.mode == "nystrom":
        doc["anchors"] = model.anchors.tolist()
    else:
        doc["frequencies"] = model.features.frequencies.tolist()
        doc["phases"] = model.features.phases.tolist()
        doc["seed_provenance"] = {**model.seed_provenance, "rff_seed": model.features.seed}
    if model.run_config is not None:
        doc["run_config"] = model.run_config
    return doc


def _field(doc: dict, key: str, path: str = ""):
    full = f"{path}.{key}" if path else key
    if not isinstance(doc, dict) or key not in doc:
        raise FormatError("missing field", full)
    return doc[key]


def _array(doc: dict, key: str, ndim: int, path: str = "") -> np.ndarray:
    full = f"{path}.{key}" if path else key
    raw = _field(doc, key, path)
    try:
        arr = np.array(raw, dtype=float)
    except (TypeError, ValueError):
        raise FormatError("not a numeric array", full) from None
    if arr.ndim != ndim and not (arr.size == 0 and ndim == 2):
        raise FormatError(f"expected a {ndim}-d array, got {arr.ndim}-d", full)
    if not np.all(np.isfinite(arr)):
        raise FormatError("non-finite entries", full)
    return arr


def model_from_dict(doc: dict) -> SpectralModel:
    if not isinstance(doc, dict):
        raise FormatError("model document must be a JSON object")
    version = _field(doc, "format_version")
    if not isinstance(version, int) or isinstance(version, bool):
        raise FormatError("must be an integer", "format_version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported model format version {version} (this build reads {FORMAT_VERSION})",
                                      "format_version")
    mode = _field(doc, "mode")
    if mode not in MODES:
        raise FormatError(f"expected one of {MODES}", "mode")
    kdoc = _field(doc, "kernel")
    try:
        kernel = KernelSpec(sigma=_field(kdoc, "sigma", "kernel"), dim=_field(kdoc, "dim", "kernel"),
                            family=_field(kdoc, "family", "kernel"))
    except (ArgumentError, TypeError) as exc:
        raise FormatError(str(exc), "kernel") from None
    lam = _field(doc, "lambda")
    if not isinstance(lam, (int, float)) or not lam > 0:
        raise FormatError("must be a positive number", "lambda")
    normalization = _field(doc, "normalization")
    if normalization not in NORMALIZATIONS:
        raise FormatError(f"expected one of {NORMALIZATIONS}", "normalization")

    mu = _array(doc, "eigenvalues", 1)
    coef = _array(doc, "coefficients", 2).T
    norms = _array(doc, "norm_constants", 1)
    k = mu.shape[0]
    if coef.shape[1] != k:
        raise FormatError(f"{coef.shape[1]} coefficient columns for {k} eigenvalues", "coefficients")
    if norms.shape[0] != k:
        raise FormatError(f"{norms.shape[0]} entries for {k} eigenvalues", "norm_constants")
    p = coef.shape[0]
    mean = _array(doc, "feature_mean", 1) if "feature_mean" in doc else np.zeros(p)
    if mean.shape[0] != p:
        raise FormatError(f"expected {p} entries", "feature_mean")

    anchors = features = None
    prov = doc.get("seed_provenance") or {}
    if mode == "nystrom":
        anchors = _array(doc, "anchors", 2)
        if anchors.shape != (p, kernel.dim):
            raise FormatError(f"expected shape ({p}, {kernel.dim}), got {anchors.shape}", "anchors")
    else:
        W = _array(doc, "frequencies", 2)
        b = _array(doc, "phases", 1)
        if W.shape != (p, kernel.dim):
            raise FormatError(f"expected shape ({p}, {kernel.dim}), got {W.shape}", "frequencies")
        if b.shape != (p,):
            raise FormatError(f"expected {p} entries", "phases")
        features = RffFeatures(W, b, kernel.sigma, prov.get("rff_seed"))
    constant = doc.get("constant_mode")
    if constant is not None and (not isinstance(constant, int) or not 0 <= constant < k):
        raise FormatError("must be null or a valid mode index", "constant_mode")
    return SpectralModel(mode=mode, kernel=kernel, lam=float(lam), normalization=normalization, eigenvalues=mu,
                         coefficients=coef, norm_constants=norms, feature_mean=mean, anchors=anchors,
                         features=features, center=bool(doc.get("center", False)), constant_mode=constant,
                         n_train=int(doc.get("n_train", 0)), seed_provenance=dict(prov),
                         run_config=doc.get("run_config"))


def atomic_write_text(path, text: str) -> None:
    """Write to a temporary sibling, then rename over ``path``."""
    path = os.fspath(path)
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def save_model(model: SpectralModel, path) -> None:
    atomic_write_text(path, json.dumps(model_to_dict(model)))


def load_model(path) -> SpectralModel:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc.msg} at line {exc.lineno} column {exc.colno}") from None
    return model_from_dict(doc)


def with_run_config(model: SpectralModel, run_config: dict) -> SpectralModel:
    return replace(model, run_config=run_config)
