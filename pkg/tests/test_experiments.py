import csv
import json

import numpy as np
import pytest

from rkhs_diffusion.errors import ArgumentError, NumericError
from rkhs_diffusion.experiments import (
    HERMITE_THRESHOLDS,
    convergence_experiment,
    hermite_experiment,
    match_modes,
    mode_comparison_experiment,
    poincare_experiment,
    reference_poincare,
)
from rkhs_diffusion.sampling import Gaussian, GaussianMixture, StandardGaussian, UniformInterval


class TestHermiteExperiment:
    @pytest.fixture(scope="class")
    @classmethod
    def run(cls, tmp_path_factory):
        path = tmp_path_factory.mktemp("h") / "curves.csv"
        return hermite_experiment(seed=0, curves_path=path), path

    def test_report_shape(self, run):
        report, path = run
        assert len(report.tables["align_error"]) == 5
        assert sorted(report.tables["assignment"].tolist()) == list(range(5))
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["x", "f1", "f2", "f3", "f4", "f5", "h0_ref", "h1_ref", "h2_ref", "h3_ref", "h4_ref"]
        assert len(rows) == 402

    def test_constant_mode_matches_h0(self, run):
        report, _ = run
        assert report.tables["align_error"][0] <= 0.1
        assert report.tables["assignment"][0] == report.tables["constant_mode"]

    def test_criteria_reflect_thresholds(self, run):
        report, _ = run
        for k, thr in HERMITE_THRESHOLDS.items():
            assert report.criteria[f"align_h{k}<={thr}"] == bool(report.tables["align_error"][k] <= thr)

    def test_extrapolation_fields(self, run):
        ext = run[0].tables["extrapolation"]
        assert ext["flag"] == (ext["max_abs_outside"] > ext["max_abs_inside"])
        assert ext["max_abs_deviation_from_h1_outside"] > 1.0

    def test_deterministic_and_serializable(self, run):
        again = hermite_experiment(seed=0)
        assert again.to_json(include_timing=False) == run[0].to_json(include_timing=False)
        json.loads(run[0].to_json())


class TestMatching:
    def test_permutation(self):
        cost = np.array([[0.9, 0.1, 0.8], [0.05, 0.9, 0.9], [0.9, 0.9, 0.2]])
        np.testing.assert_array_equal(match_modes(cost), [1, 0, 2])

    def test_rectangular(self):
        cost = np.array([[0.5, 0.1], [0.0, 0.9], [0.3, 0.3]])
        np.testing.assert_array_equal(match_modes(cost), [1, 0])

    def test_invariant_to_row_order(self):
        rng = np.random.default_rng(0)
        cost = rng.uniform(size=(5, 5))
        perm = rng.permutation(5)
        # the same estimated mode is picked whatever order the modes arrive in
        np.testing.assert_array_equal(perm[match_modes(cost[perm])], match_modes(cost))


class TestConvergence:
    def test_single_n(self):
        report = convergence_experiment([100], repeats=2)
        assert len(report.tables["rows"]) == 1
        assert report.criteria == {}
        assert report.notes

    @pytest.mark.parametrize("kwargs", [{"ns": [100], "c": 0.0}, {"ns": [100], "c": -1.0}, {"ns": []},
                                        {"ns": [200, 100]}, {"ns": [10]}])
    def test_invalid(self, kwargs):
        with pytest.raises(ArgumentError):
            convergence_experiment(**kwargs)

    def test_schedule(self):
        report = convergence_experiment([100, 200], c=2.0, repeats=1)
        lams = [row["lambda"] for row in report.tables["rows"]]
        np.testing.assert_allclose(lams, [2.0 * 100**-0.25, 2.0 * 200**-0.25])


class TestPoincare:
    def test_gaussian(self):
        est, report = poincare_experiment(StandardGaussian(1), 500, 500, 1e-3, 1.0)
        assert 0.8 <= est <= 1.2
        assert report.tables["reference"] == pytest.approx(1.0, rel=1e-6)

    def test_uniform(self):
        est, report = poincare_experiment(UniformInterval(0.0, 1.0), 500, 500, 1e-3, 0.3)
        assert est == pytest.approx(1 / np.pi**2, rel=0.25)
        assert report.tables["reference"] == pytest.approx(1 / np.pi**2, rel=1e-3)

    def test_single_point_is_degenerate(self):
        with pytest.raises(NumericError):
            poincare_experiment(StandardGaussian(1), 1, 1, 1e-3, 1.0)

    def test_references(self):
        assert reference_poincare(Gaussian([0.0, 1.0], [1.0, 4.0])) == pytest.approx(4.0, rel=1e-5)
        mix = GaussianMixture([0.5, 0.5], [[-2.0], [2.0]], [[1.0], [1.0]])
        assert reference_poincare(mix) > 1.0
        assert reference_poincare(StandardGaussian(3)) == pytest.approx(1.0, rel=1e-6)


class TestModeComparison:
    def test_degenerate_feature_count(self):
        report = mode_comparison_experiment(100, 100, 1, 1e-3)
        assert report.tables["subspace_distance"] == 1.0
        assert report.notes

    def test_deterministic(self):
        a = mode_comparison_experiment(100, 100, 300, 1e-3, seed=4)
        b = mode_comparison_experiment(100, 100, 300, 1e-3, seed=4)
        assert a.to_json(include_timing=False) == b.to_json(include_timing=False)

    @pytest.mark.slow
    def test_large_rff_agrees_with_nystrom(self):
        report = mode_comparison_experiment(400, 400, 4000, 1e-3, seed=0)
        assert report.tables["subspace_distance"] <= 0.2
        np.testing.assert_allclose(report.tables["eigenvalue_ratio_nystrom_over_rff"], 1.0, rtol=0.1)
