import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rkhs_diffusion.errors import ArgumentError, FormatError, NumericError, UnsupportedVersionError
from rkhs_diffusion.estimator import (
    EstimatorConfig,
    GramBundle,
    RffFeatures,
    SpectralModel,
    assemble_nystrom,
    assemble_rff,
    estimated_operator_eigenvalues,
    eval_functions,
    fit,
    fit_dataset,
    load_model,
    model_from_dict,
    model_to_dict,
    nonconstant_modes,
    sample_rff,
    save_model,
)
from rkhs_diffusion.kernel import KernelSpec, kernel_matrix
from rkhs_diffusion.sampling import Dataset, StandardGaussian, sample_iid

K1 = KernelSpec(1.0, 1)


def _bundle(sigma_p, delta_p):
    p = sigma_p.shape[0]
    return GramBundle(S=np.eye(p), Dstack=np.zeros((p, p)), sigma_p=sigma_p, delta_p=delta_p,
                      normalization="operator", mode="nystrom", kernel=K1, anchors=np.zeros((p, 1)),
                      feature_mean=np.zeros(p))


class TestNystromAssembly:
    def test_single_point(self):
        b = assemble_nystrom(Dataset([[0.0]]), EstimatorConfig(lam=0.1, p=1), K1)
        np.testing.assert_array_equal(b.S, [[1.0]])
        np.testing.assert_array_equal(b.Dstack, [[0.0]])
        np.testing.assert_array_equal(b.sigma_p, [[1.0]])
        np.testing.assert_array_equal(b.delta_p, [[0.0]])

    def test_two_points_psd(self):
        b = assemble_nystrom(Dataset([[0.0], [0.7]]), EstimatorConfig(lam=0.1, p=2), K1)
        for M in (b.sigma_p, b.delta_p):
            np.testing.assert_array_equal(M, M.T)
            assert np.linalg.eigvalsh(M).min() >= -1e-15

    def test_gradient_entry(self):
        b = assemble_nystrom(Dataset([[0.0], [1.0]]), EstimatorConfig(lam=0.1, p=2), K1)
        np.testing.assert_allclose(b.Dstack[0, 1], np.exp(-0.5), rtol=1e-14)

    def test_dstack_row_order(self):
        X = np.random.default_rng(0).normal(size=(4, 2))
        spec = KernelSpec(1.0, 2)
        b = assemble_nystrom(Dataset(X), EstimatorConfig(lam=0.1, p=3), spec)
        # row a*d + j holds d/dx_j of each anchor function at X[a]
        r = X[2] - X[1]
        np.testing.assert_allclose(b.Dstack[2 * 2 + 1, 1], -r[1] * np.exp(-r @ r / 2), rtol=1e-13)

    def test_p_exceeds_n(self):
        with pytest.raises(ArgumentError, match="p exceeds n"):
            assemble_nystrom(Dataset(np.zeros((3, 1))), EstimatorConfig(lam=0.1, p=4), K1)

    def test_dimension_mismatch(self):
        with pytest.raises(ArgumentError):
            assemble_nystrom(Dataset(np.zeros((3, 2))), EstimatorConfig(lam=0.1, p=2), K1)

    def test_uniform_anchors_reproducible(self, ou_data_200):
        cfg = EstimatorConfig(lam=0.1, p=20, anchor_policy="uniform", anchor_seed=3)
        a = assemble_nystrom(ou_data_200, cfg, K1)
        b = assemble_nystrom(ou_data_200, cfg, K1)
        np.testing.assert_array_equal(a.anchor_indices, b.anchor_indices)
        assert len(set(a.anchor_indices.tolist())) == 20

    def test_row_partition_sum(self, ou_data_200):
        cfg = EstimatorConfig(lam=0.1, p=50, normalization="gram")
        full = assemble_nystrom(ou_data_200, cfg, K1)
        A = ou_data_200.points[:50]
        parts = np.array_split(ou_data_200.points, 7)
        total = sum(kernel_matrix(K1, P, A).T @ kernel_matrix(K1, P, A) for P in parts)
        np.testing.assert_allclose(total, full.sigma_p, rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("field,value", [("lam", 0.0), ("lam", -1.0), ("p", 0), ("mode", "exact"),
                                             ("normalization", "none"), ("anchor_policy", "kmeans")])
    def test_config_validation(self, field, value):
        kw = {"lam": 0.1, "p": 3, field: value}
        with pytest.raises(ArgumentError):
            EstimatorConfig(**kw)


class TestRff:
    def test_frequency_variance(self):
        f = sample_rff(KernelSpec(1.0, 1), 100000, seed=4)
        assert 0.99 <= f.frequencies.var() <= 1.01

    def test_frequency_variance_scaled(self):
        f = sample_rff(KernelSpec(2.0, 1), 100000, seed=4)
        assert abs(f.frequencies.var() - 0.25) <= 0.004

    def test_deterministic(self):
        a, b = sample_rff(K1, 50, 9), sample_rff(K1, 50, 9)
        np.testing.assert_array_equal(a.frequencies, b.frequencies)
        np.testing.assert_array_equal(a.phases, b.phases)
        assert np.all((a.phases >= 0) & (a.phases < 2 * np.pi))

    def test_zero_p(self):
        with pytest.raises(ArgumentError):
            sample_rff(K1, 0, 0)

    def test_zero_frequency(self):
        feats = RffFeatures([[0.0]], [0.0], 1.0)
        X = np.random.default_rng(1).normal(size=(5, 1))
        b = assemble_rff(Dataset(X), feats, EstimatorConfig(lam=0.1, p=1, mode="rff"))
        np.testing.assert_allclose(b.S, np.sqrt(2.0), rtol=1e-15)
        np.testing.assert_array_equal(b.Dstack, 0.0)
        np.testing.assert_array_equal(b.delta_p, [[0.0]])

    def test_unit_frequency_at_origin(self):
        feats = RffFeatures([[1.0]], [0.0], 1.0)
        b = assemble_rff(Dataset([[0.0]]), feats, EstimatorConfig(lam=0.1, p=1, mode="rff"))
        np.testing.assert_allclose(b.S, [[np.sqrt(2.0)]])
        np.testing.assert_allclose(b.Dstack, [[0.0]], atol=1e-16)

    def test_gradients_match_finite_difference(self):
        feats = sample_rff(KernelSpec(0.7, 2), 6, 1)
        x = np.array([[0.3, -0.4]])
        h = 1e-6
        for j in range(2):
            e = np.zeros((1, 2))
            e[0, j] = h
            fd = (feats.values(x + e) - feats.values(x - e)) / (2 * h)
            np.testing.assert_allclose(feats.gradients(x)[0, j], fd[0], atol=1e-8)

    def test_literal_sum_only_differs_in_2d(self):
        X = sample_iid(StandardGaussian(2), 40, 0)
        feats = sample_rff(KernelSpec(1.0, 2), 10, 0)
        a = assemble_rff(X, feats, EstimatorConfig(lam=0.1, p=10, mode="rff"))
        b = assemble_rff(X, feats, EstimatorConfig(lam=0.1, p=10, mode="rff", rff_literal_sum=True))
        G = feats.gradients(X.points)
        np.testing.assert_allclose(a.delta_p, sum(G[:, j].T @ G[:, j] for j in range(2)) / 40, rtol=1e-12)
        assert not np.allclose(a.delta_p, b.delta_p)
        X1 = sample_iid(StandardGaussian(1), 40, 0)
        f1 = sample_rff(K1, 10, 0)
        c = assemble_rff(X1, f1, EstimatorConfig(lam=0.1, p=10, mode="rff"))
        d = assemble_rff(X1, f1, EstimatorConfig(lam=0.1, p=10, mode="rff", rff_literal_sum=True))
        np.testing.assert_array_equal(c.delta_p, d.delta_p)


class TestFit:
    def test_single_point_constant_mode(self):
        model = fit_dataset(Dataset([[0.0]]), EstimatorConfig(lam=0.1, p=1), K1)
        np.testing.assert_allclose(model.eigenvalues, [10.0], rtol=1e-14)
        assert model.constant_mode == 0

    def test_identity_pair(self):
        model = fit(_bundle(np.eye(3), np.eye(3)), EstimatorConfig(lam=1.0, p=3))
        np.testing.assert_allclose(model.eigenvalues, 0.5)

    def test_lambda_must_be_positive(self):
        with pytest.raises(ArgumentError):
            EstimatorConfig(lam=0.0, p=1)

    def test_non_finite_gram(self):
        S = np.array([[np.nan]])
        with pytest.raises((NumericError, ArgumentError)):
            fit(_bundle(S, np.zeros((1, 1))), EstimatorConfig(lam=1.0, p=1))

    def test_unit_empirical_norm_and_sign(self, ou_data_200, ou_model_200):
        F = eval_functions(ou_model_200, range(10), ou_data_200.points)
        np.testing.assert_allclose(np.mean(F**2, axis=0), 1.0, rtol=1e-9)
        C = ou_model_200.coefficients
        idx = np.argmax(np.abs(C), axis=0)
        assert np.all(C[idx, np.arange(C.shape[1])] > 0)

    def test_rayleigh_consistency(self, ou_data_200):
        cfg = EstimatorConfig(lam=1e-3, p=200)
        b = assemble_nystrom(ou_data_200, cfg, K1)
        m = fit(b, cfg)
        B = b.delta_p + cfg.lam * np.eye(200)
        live = m.eigenvalues > 1e-8 * m.eigenvalues[0]
        for k in np.flatnonzero(live)[:20]:
            v = m.coefficients[:, k]
            np.testing.assert_allclose(m.eigenvalues[k], v @ b.sigma_p @ v / (v @ B @ v), rtol=1e-8)

    def test_constant_mode_is_flat(self, ou_data_200, ou_model_200):
        k = ou_model_200.constant_mode
        assert k == 0
        f = eval_functions(ou_model_200, [k], ou_data_200.points)[:, 0]
        assert np.var(f) <= 0.05 * np.mean(f**2)

    def test_centering_removes_constant(self, ou_data_200):
        m = fit_dataset(ou_data_200, EstimatorConfig(lam=1e-3, p=200, center=True), K1, n_components=5)
        assert m.constant_mode is None
        f = eval_functions(m, [0], ou_data_200.points)[:, 0]
        assert abs(np.mean(f)) < 1e-8
        ev = estimated_operator_eigenvalues(m)
        assert ev[0] == pytest.approx(1.0, rel=0.2)

    def test_n_components(self, ou_data_200):
        m = fit_dataset(ou_data_200, EstimatorConfig(lam=1e-3, p=50), K1, n_components=4)
        assert m.coefficients.shape == (50, 4) and m.eigenvalues.shape == (4,)
        with pytest.raises(ArgumentError):
            fit_dataset(ou_data_200, EstimatorConfig(lam=1e-3, p=50), K1, n_components=51)

    def test_nystrom_bitwise(self, ou_data_200):
        cfg = EstimatorConfig(lam=1e-3, p=200)
        a, b = fit_dataset(ou_data_200, cfg, K1), fit_dataset(ou_data_200, cfg, K1)
        np.testing.assert_array_equal(a.eigenvalues, b.eigenvalues)
        np.testing.assert_array_equal(a.coefficients, b.coefficients)

    def test_normalization_equivalence(self, ou_data_200):
        n = ou_data_200.n
        a = fit_dataset(ou_data_200, EstimatorConfig(lam=1e-3, p=n), K1)
        b = fit_dataset(ou_data_200, EstimatorConfig(lam=1e-3 * n, p=n, normalization="gram"), K1)
        np.testing.assert_allclose(a.eigenvalues, b.eigenvalues, rtol=1e-10, atol=1e-10 * a.eigenvalues[0])

    def test_lambda_monotone(self, ou_data_200):
        mus = [fit_dataset(ou_data_200, EstimatorConfig(lam=lam, p=100), K1).eigenvalues
               for lam in (1e-4, 1e-3, 1e-2, 1e-1)]
        for lo, hi in zip(mus, mus[1:]):
            # roundoff floor scaled by the largest eigenvalue
            assert np.all(hi <= lo * (1 + 1e-10) + 1e-12 * lo[0])

    def test_ou_spectrum(self):
        data = sample_iid(StandardGaussian(1), 400, seed=0)
        m = fit_dataset(data, EstimatorConfig(lam=1e-3, p=400), K1)
        np.testing.assert_allclose(estimated_operator_eigenvalues(m)[:3], [1, 2, 3], rtol=0.2)

    def test_two_dimensional_tensor_spectrum(self):
        data = sample_iid(StandardGaussian(2), 400, seed=1)
        m = fit_dataset(data, EstimatorConfig(lam=1e-3, p=400), KernelSpec(1.0, 2))
        # OU in 2-D: eigenvalue 1 with multiplicity 2, then 2 with multiplicity 3
        np.testing.assert_allclose(estimated_operator_eigenvalues(m)[:2], [1, 1], rtol=0.25)


class TestEvaluation:
    def _single_anchor(self, c):
        return SpectralModel(mode="nystrom", kernel=K1, lam=0.1, normalization="operator", eigenvalues=[1.0],
                             coefficients=[[c]], norm_constants=[1.0], feature_mean=[0.0], anchors=[[0.0]])

    def test_single_anchor(self):
        np.testing.assert_allclose(eval_functions(self._single_anchor(2.5), [0], [[0.0]]), [[2.5]])

    def test_zero_frequency_rff(self):
        feats = RffFeatures([[0.0]], [0.0], 1.0)
        m = SpectralModel(mode="rff", kernel=K1, lam=0.1, normalization="operator", eigenvalues=[1.0],
                          coefficients=[[3.0]], norm_constants=[1.0], feature_mean=[0.0], features=feats)
        np.testing.assert_allclose(eval_functions(m, [0], np.linspace(-5, 5, 9)[:, None]), 3.0 * np.sqrt(2))

    def test_index_out_of_range(self):
        with pytest.raises(ArgumentError):
            eval_functions(self._single_anchor(1.0), [1], [[0.0]])
        with pytest.raises(ArgumentError):
            eval_functions(self._single_anchor(1.0), [-1], [[0.0]])

    def test_operator_eigenvalues_skip_constant(self):
        m = SpectralModel(mode="nystrom", kernel=K1, lam=0.1, normalization="operator",
                          eigenvalues=[10.0, 1.0, 0.5], coefficients=np.eye(3), norm_constants=np.ones(3),
                          feature_mean=np.zeros(3), anchors=np.zeros((3, 1)), constant_mode=0)
        np.testing.assert_allclose(estimated_operator_eigenvalues(m), [1.0, 2.0])
        np.testing.assert_allclose(estimated_operator_eigenvalues(m, skip_constant=False), [0.1, 1.0, 2.0])
        np.testing.assert_array_equal(nonconstant_modes(m), [1, 2])

    def test_degenerate(self):
        m = SpectralModel(mode="nystrom", kernel=K1, lam=0.1, normalization="operator", eigenvalues=[0.0],
                          coefficients=[[1.0]], norm_constants=[1.0], feature_mean=[0.0], anchors=[[0.0]])
        with pytest.raises(NumericError):
            estimated_operator_eigenvalues(m)

    def test_model_is_immutable(self, ou_model_200):
        with pytest.raises(ValueError):
            ou_model_200.coefficients[0, 0] = 1.0


class TestPersistence:
    @pytest.mark.parametrize("mode", ["nystrom", "rff"])
    def test_round_trip(self, tmp_path, ou_data_200, mode):
        m = fit_dataset(ou_data_200, EstimatorConfig(lam=1e-3, p=40, mode=mode), K1, rff_seed=3, n_components=6)
        save_model(m, tmp_path / "m.json")
        back = load_model(tmp_path / "m.json")
        for name in ("eigenvalues", "coefficients", "norm_constants", "feature_mean"):
            np.testing.assert_allclose(getattr(back, name), getattr(m, name), rtol=1e-15, atol=0)
        assert back.constant_mode == m.constant_mode and back.kernel == m.kernel and back.lam == m.lam
        Q = np.linspace(-3, 3, 11)[:, None]
        np.testing.assert_array_equal(eval_functions(back, range(6), Q), eval_functions(m, range(6), Q))
        if mode == "rff":
            np.testing.assert_array_equal(back.features.frequencies, m.features.frequencies)
            assert back.seed_provenance["rff_seed"] == 3

    def test_coefficients_column_major(self, ou_model_200):
        doc = model_to_dict(ou_model_200)
        np.testing.assert_array_equal(doc["coefficients"][1], ou_model_200.coefficients[:, 1])

    def test_truncated(self, tmp_path, ou_model_200):
        text = json.dumps(model_to_dict(ou_model_200))
        (tmp_path / "t.json").write_text(text[: len(text) // 2])
        with pytest.raises(FormatError):
            load_model(tmp_path / "t.json")

    def test_future_version(self, ou_model_200):
        doc = model_to_dict(ou_model_200)
        doc["format_version"] = 2
        with pytest.raises(UnsupportedVersionError):
            model_from_dict(doc)

    @pytest.mark.parametrize("path,value", [("kernel.sigma", -1.0), ("lambda", "x"), ("anchors", [[1.0]]),
                                            ("eigenvalues", "x"), ("mode", "exact")])
    def test_field_path_reported(self, ou_model_200, path, value):
        doc = model_to_dict(ou_model_200)
        keys = path.split(".")
        target = doc
        for key in keys[:-1]:
            target = target[key]
        target[keys[-1]] = value
        with pytest.raises(FormatError) as err:
            model_from_dict(doc)
        assert err.value.path.split(".")[0] == keys[0]

    def test_missing_field(self, ou_model_200):
        doc = model_to_dict(ou_model_200)
        del doc["norm_constants"]
        with pytest.raises(FormatError, match="norm_constants"):
            model_from_dict(doc)


class TestProperties:
    @settings(max_examples=25, deadline=None)
    @given(n=st.integers(2, 25), seed=st.integers(0, 10**6), lam=st.floats(1e-3, 1.0),
           sigma=st.floats(0.5, 2.0))
    def test_eigenvalues_bounded_by_inverse_lambda(self, n, seed, lam, sigma):
        data = sample_iid(StandardGaussian(1), n, seed)
        cfg = EstimatorConfig(lam=lam, p=n)
        b = assemble_nystrom(data, cfg, KernelSpec(sigma, 1))
        m = fit(b, cfg)
        assert np.all(np.diff(m.eigenvalues) <= 1e-12 * m.eigenvalues[0])
        # Rayleigh quotient with Delta_p PSD: mu <= |Sigma_p|_2 / lambda
        assert m.eigenvalues[0] <= (1 + 1e-9) * np.linalg.norm(b.sigma_p, 2) / lam
        assert m.eigenvalues[-1] >= -1e-9 * m.eigenvalues[0]
