import itertools

import numpy as np
import pytest

from hsdr.errors import DegenerateColumnWarning, DegenerateData, InvalidInput
from hsdr.metrics import (
    atpv,
    band_atpv,
    loglog_slope,
    mi_matrix,
    mutual_info_knn,
    reconstruction_error,
    relative_error,
    time_fit,
)
from hsdr.reducers import FitConfig, fit


def gaussian_pair(n, rho, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(n)
    b = rho * a + np.sqrt(1 - rho**2) * rng.standard_normal(n)
    return a, b


class TestReconstructionError:
    def test_worked_examples(self, rng):
        x = rng.random((50, 8)) + 0.1
        assert relative_error(x, x) == 0.0
        assert relative_error(x, np.zeros_like(x)) == pytest.approx(1.0, abs=1e-10)
        assert relative_error(x, x / 2) == pytest.approx(0.25, abs=1e-12)

    def test_per_pixel_mean(self):
        # one pixel perfectly reconstructed, one lost: mean of 0 and 1
        x = np.array([[3.0, 4.0], [1.0, 0.0]])
        x_hat = np.array([[3.0, 4.0], [0.0, 0.0]])
        assert relative_error(x, x_hat) == pytest.approx(0.5, abs=1e-12)

    def test_zero_pixel_guarded(self):
        x = np.zeros((3, 4))
        assert relative_error(x, x) == 0.0
        assert np.isfinite(relative_error(x, np.ones_like(x)))

    def test_shape_checks(self, full_rank_pixels):
        m = fit("pca", full_rank_pixels, FitConfig(r=3))
        with pytest.raises(InvalidInput):
            reconstruction_error(full_rank_pixels[:, :5], m)
        with pytest.raises(InvalidInput):
            relative_error(np.ones((2, 3)), np.ones((3, 2)))

    def test_monotone_in_r_for_pca(self, small_scene):
        x = small_scene[0].pixels()
        errs = [reconstruction_error(x, fit("pca", x, FitConfig(r=r))) for r in range(1, x.shape[1] + 1)]
        assert all(b <= a + 1e-12 for a, b in itertools.pairwise(errs))

    @pytest.mark.filterwarnings("ignore::hsdr.errors.NotConvergedWarning")
    @pytest.mark.parametrize("r", [1, 2, 5, 10])
    def test_fastica_matches_pca(self, small_scene, r):
        x = small_scene[0].pixels()
        e_pca = reconstruction_error(x, fit("pca", x, FitConfig(r=r)))
        e_ica = reconstruction_error(x, fit("fastica", x, FitConfig(r=r)))
        assert abs(e_ica - e_pca) <= 1e-8

    @pytest.mark.filterwarnings("ignore::hsdr.errors.NotConvergedWarning")
    @pytest.mark.parametrize("method", ["pca", "fastica", "osp", "lpp", "vsrp"])
    def test_complete_basis_is_exact(self, method):
        # 116 bands: a square sparse projection of this size is invertible
        # for every seed we have drawn, unlike at a dozen bands
        x = np.random.default_rng(5).random((600, 116))
        m = fit(method, x, FitConfig(r=x.shape[1]))
        assert reconstruction_error(x, m) <= 1e-9


class TestMutualInfo:
    @pytest.mark.parametrize("rho", [0.5, 0.9])
    def test_gaussian_oracle(self, rho):
        a, b = gaussian_pair(43120, rho, seed=int(rho * 10))
        exact = -0.5 * np.log(1 - rho**2)
        assert abs(mutual_info_knn(a, b) - exact) <= 0.05

    def test_independent_near_zero(self):
        rng = np.random.default_rng(7)
        a, b = rng.standard_normal((2, 43120))
        assert mutual_info_knn(a, b) <= 0.05

    def test_exactly_symmetric(self):
        a, b = gaussian_pair(2000, 0.7, seed=1)
        assert mutual_info_knn(a, b) == mutual_info_knn(b, a)

    def test_deterministic(self):
        a, b = gaussian_pair(2000, 0.7, seed=1)
        assert mutual_info_knn(a, b, seed=4) == mutual_info_knn(a, b, seed=4)

    def test_monotone_transform_invariance(self):
        a, b = gaussian_pair(43120, 0.8, seed=2)
        assert abs(mutual_info_knn(a, b) - mutual_info_knn(np.exp(a), b)) <= 0.05

    def test_ties_handled(self):
        # heavily quantised columns still give a finite, nonnegative estimate
        a, b = gaussian_pair(3000, 0.9, seed=3)
        mi = mutual_info_knn(np.round(a), np.round(b))
        assert np.isfinite(mi) and mi >= 0

    def test_constant_column_warns(self):
        with pytest.warns(DegenerateColumnWarning):
            assert mutual_info_knn(np.ones(100), np.arange(100.0)) == 0.0

    def test_input_checks(self):
        with pytest.raises(InvalidInput):
            mutual_info_knn(np.arange(20.0), np.arange(20.0), k=3)
        with pytest.raises(InvalidInput):
            mutual_info_knn(np.arange(50.0), np.arange(40.0))
        with pytest.raises(InvalidInput):
            mutual_info_knn(np.r_[np.arange(49.0), np.nan], np.arange(50.0))


class TestMiMatrix:
    def test_duplicate_column_dominates(self, rng):
        c = rng.standard_normal((3000, 4))
        c[:, 3] = c[:, 0] + 0.01 * rng.standard_normal(3000)
        mat = mi_matrix(c).values
        i, j = np.unravel_index(np.argmax(mat), mat.shape)
        assert {i, j} == {0, 3}

    def test_symmetric_zero_diagonal(self, rng):
        mat = mi_matrix(rng.standard_normal((800, 5))).values
        assert np.array_equal(mat, mat.T)
        assert np.all(np.diag(mat) == 0)
        assert np.all(mat >= 0)

    def test_independent_noise_columns(self):
        rng = np.random.default_rng(11)
        mat = mi_matrix(rng.standard_normal((5000, 25)), sample_size=3000).values
        assert mat.max() <= 0.08

    def test_permutation_equivariance(self, rng):
        c = rng.standard_normal((600, 4))
        c[:, 1] += c[:, 2]
        perm = np.array([2, 0, 3, 1])
        a = mi_matrix(c).values
        b = mi_matrix(c[:, perm]).values
        assert np.array_equal(b, a[np.ix_(perm, perm)])

    def test_sample_size(self, rng):
        c = rng.standard_normal((500, 3))
        res = mi_matrix(c, sample_size=200, seed=3)
        assert res.sample_size == 200 and res.knn_k == 3
        assert np.array_equal(res.values, mi_matrix(c, sample_size=200, seed=3).values)
        with pytest.raises(InvalidInput):
            mi_matrix(c, sample_size=501)
        with pytest.raises(InvalidInput):
            mi_matrix(c[:, :1])


class TestAtpv:
    def test_pure_stripes_is_one(self, rng):
        img = np.tile(rng.standard_normal(40), (30, 1))
        assert atpv(img) == 1.0

    def test_along_track_only_is_zero(self, rng):
        img = np.tile(rng.standard_normal(30)[:, None], (1, 40))
        assert atpv(img) == 0.0

    def test_noise_mean_is_one_over_lines(self):
        lines, samples = 50, 60
        rng = np.random.default_rng(2024)
        vals = [atpv(rng.standard_normal((lines, samples))) for _ in range(200)]
        assert abs(np.mean(vals) - 1.0 / lines) <= 0.002

    def test_invariances(self, rng):
        img = rng.standard_normal((20, 30)) + np.linspace(0, 2, 30)
        base = atpv(img)
        assert atpv(img + 7.5) == pytest.approx(base, abs=1e-12)
        assert atpv(3.25 * img) == pytest.approx(base, abs=1e-12)

    def test_hand_example(self):
        # columns [0, 2] with within-column spread [-1, 1]: between 1, within 1
        img = np.array([[-1.0, 1.0], [1.0, 3.0]])
        assert atpv(img) == pytest.approx(0.5, abs=1e-15)

    def test_constant_raises(self):
        with pytest.raises(DegenerateData):
            atpv(np.full((4, 5), 2.0))
        with pytest.raises(InvalidInput):
            atpv(np.ones((1, 5)))

    def test_band_atpv(self, rng):
        cube = rng.standard_normal((10, 12, 4))
        cube[:, :, 1] = 3.0
        cube[:, :, 2] = np.tile(rng.standard_normal(12), (10, 1))
        per_band, med = band_atpv(cube)
        assert np.isnan(per_band[1]) and per_band[2] == 1.0
        assert med == pytest.approx(np.nanmedian(per_band))
        _, mean = band_atpv(cube, reduce="mean")
        assert mean == pytest.approx(np.nanmean(per_band))
        with pytest.raises(DegenerateData):
            band_atpv(np.ones((3, 3, 2)))


class TestTiming:
    def test_median_of_runs(self, full_rank_pixels):
        rec = time_fit("pca", full_rank_pixels, FitConfig(r=3), repeats=5)
        assert rec.median_seconds == sorted(rec.run_durations)[2]
        assert rec.pixel_count == 400 and rec.band_count == 12 and len(rec.run_durations) == 5

    @pytest.mark.parametrize("repeats", [1, 2, 4])
    def test_repeats_validation(self, full_rank_pixels, repeats):
        with pytest.raises(InvalidInput):
            time_fit("pca", full_rank_pixels, FitConfig(r=3), repeats=repeats)

    def test_loglog_slope(self):
        n = np.array([10.0, 100.0, 1000.0])
        assert loglog_slope(n, 3 * n**2) == pytest.approx(2.0)
        assert loglog_slope(n, 0.5 * n) == pytest.approx(1.0)

    def test_lpp_grows_faster_than_pca(self):
        rng = np.random.default_rng(0)
        x = rng.random((4000, 20))
        # large enough that the quadratic kNN graph dominates fixed overheads
        sizes = [500, 1000, 2000, 4000]
        slope = {}
        for method in ("pca", "lpp"):
            cfg = FitConfig(r=5, lpp_subsample=None)
            secs = [time_fit(method, x[:n], cfg, repeats=3).median_seconds for n in sizes]
            slope[method] = loglog_slope(sizes, secs)
        assert slope["lpp"] >= 1.5
        assert slope["lpp"] > slope["pca"]
