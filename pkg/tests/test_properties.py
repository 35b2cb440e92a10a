"""Property tests for the invariants each module promises."""

import itertools
import warnings

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hsdr import numerics
from hsdr.hsio import SceneSpec, generate_scene, standardize, stripe_gains
from hsdr.metrics import atpv, reconstruction_error
from hsdr.reducers import (
    FitConfig,
    autoencoder_loss_grad,
    encode,
    fit,
    osp_projector,
    vsrp_matrix,
)
from hsdr.tasks import (
    accuracy_metrics,
    ace_map,
    hinge_objective,
    sam_map,
    svm_train_ovr,
    sweep_threshold,
)

seeds = st.integers(0, 2**32 - 1)
dims = st.integers(1, 12)
scales = st.sampled_from([1e-3, 1.0, 1e3])


def random_matrix(seed, m, n, scale=1.0, rank=None):
    rng = np.random.default_rng(seed)
    if rank is None:
        return scale * rng.standard_normal((m, n))
    return scale * rng.standard_normal((m, rank)) @ rng.standard_normal((rank, n))


def random_spd(seed, n):
    a = random_matrix(seed, n, n)
    return a @ a.T + n * np.eye(n)


def pixels(seed, n=120, d=8):
    # positive, full-rank pixel data
    rng = np.random.default_rng(seed)
    return rng.random((n, d)) + 0.05


# ---- numerics -------------------------------------------------------------------------

class TestNumerics:
    @given(seeds, dims, dims, scales, st.sampled_from(["lapack", "jacobi"]))
    def test_svd_reconstructs(self, seed, m, n, scale, method):
        a = random_matrix(seed, m, n, scale)
        res = numerics.svd(a, method=method)
        recon = (res.u * res.singular_values) @ res.vt
        assert np.linalg.norm(recon - a) <= 1e-10 * max(np.linalg.norm(a), 1e-300)
        k = min(m, n)
        assert res.singular_values.shape == (k,)
        assert np.all(np.diff(res.singular_values) <= 0) and np.all(res.singular_values >= 0)
        assert np.abs(res.u.T @ res.u - np.eye(k)).max() <= 1e-10
        assert np.abs(res.vt @ res.vt.T - np.eye(k)).max() <= 1e-10

    @given(seeds, dims, dims, st.data())
    def test_pinv_moore_penrose(self, seed, m, n, data):
        rank = data.draw(st.integers(0, min(m, n)))
        a = random_matrix(seed, m, n, rank=rank) if rank else np.zeros((m, n))
        p = numerics.pinv(a)
        tol = 1e-8 * max(1.0, np.linalg.norm(a) * np.linalg.norm(p))
        assert np.linalg.norm(a @ p @ a - a) <= tol * max(1.0, np.linalg.norm(a))
        assert np.linalg.norm(p @ a @ p - p) <= tol * max(1.0, np.linalg.norm(p))
        assert np.linalg.norm((a @ p).T - a @ p) <= tol
        assert np.linalg.norm((p @ a).T - p @ a) <= tol

    @given(seeds, dims)
    def test_gen_eig_identity_b(self, seed, n):
        a = random_matrix(seed, n, n)
        a = a + a.T
        g = numerics.gen_sym_eig(a, np.eye(n))
        s = numerics.sym_eig(a)
        assert np.abs(g.eigenvalues - s.eigenvalues).max() <= 1e-10 * max(1.0, np.abs(s.eigenvalues).max())

    @given(seeds, dims)
    def test_gen_eig_residual(self, seed, n):
        a = random_matrix(seed, n, n)
        a = a + a.T
        b = random_spd(seed + 1, n)
        res = numerics.gen_sym_eig(a, b)
        for lam, v in zip(res.eigenvalues, res.eigenvectors.T):
            assert np.linalg.norm(a @ v - lam * b @ v) <= 1e-8 * np.linalg.norm(a)

    @given(seeds, st.integers(1, 15), st.integers(1, 8))
    def test_nnls_beats_zero_and_kkt(self, seed, m, n):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((m, n))
        b = rng.standard_normal(m)
        x = numerics.nnls(a, b)
        assert np.all(x >= 0)
        assert np.linalg.norm(a @ x - b) <= np.linalg.norm(b) + 1e-12
        grad = a.T @ (a @ x - b)
        assert np.all(grad[x == 0] >= -1e-8 * max(1.0, np.linalg.norm(a) * np.linalg.norm(b)))

    @given(seeds, dims)
    def test_cholesky_factor(self, seed, n):
        s = random_spd(seed, n)
        low = numerics.cholesky(s)
        assert np.allclose(np.triu(low, 1), 0)
        assert np.linalg.norm(low @ low.T - s) <= 1e-12 * np.linalg.norm(s)


# ---- reducers -------------------------------------------------------------------------

class TestReducers:
    @given(seeds, st.integers(0, 8))
    def test_osp_projector_idempotent(self, seed, k):
        x = pixels(seed, d=8)
        m = fit("osp", x, FitConfig(r=8))
        p = osp_projector(m.linear_w[:, :k])
        assert np.linalg.norm(p @ p - p) <= 1e-8
        assert np.linalg.norm(p - p.T) <= 1e-8

    @settings(max_examples=15)
    @given(seeds, st.integers(1, 5))
    def test_nmf_monotone_nonnegative(self, seed, r):
        x = pixels(seed, d=8)
        m = fit("nmf", x, FitConfig(r=r, max_iter=60))
        hist = np.asarray(m.history)
        assert np.all(np.diff(hist) <= 1e-12 * hist[0])
        assert np.all(m.nmf_basis >= 0) and np.all(encode(m, x) >= 0)
        assert np.allclose(np.linalg.norm(m.nmf_basis, axis=0), 1.0, atol=1e-8)

    @given(seeds, st.integers(1, 8))
    def test_pca_uncorrelated(self, seed, r):
        x = pixels(seed, d=8)
        z = encode(fit("pca", x, FitConfig(r=r)), x)
        c = np.cov(z.T).reshape(r, r)
        off = c - np.diag(np.diag(c))
        assert np.abs(off).max() <= 1e-8 * np.diag(c).max()

    @given(seeds, st.sampled_from(["pca", "pca_cs", "fastica", "osp", "lpp", "vsrp"]),
           st.floats(-3, 3, allow_nan=False))
    def test_linear_encode_is_affine(self, seed, method, alpha):
        x = pixels(seed, d=8)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            m = fit(method, x, FitConfig(r=3))
        a, b = x[:5], x[5:10]
        lhs = encode(m, alpha * a + (1 - alpha) * b)
        rhs = alpha * encode(m, a) + (1 - alpha) * encode(m, b)
        assert np.abs(lhs - rhs).max() <= 1e-10 * max(1.0, np.abs(rhs).max())

    @settings(max_examples=15)
    @given(seeds, st.integers(1, 8))
    def test_fastica_spans_pca(self, seed, r):
        x = pixels(seed, n=200, d=8)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ica = fit("fastica", x, FitConfig(r=r))
        pca = fit("pca", x, FitConfig(r=r))

        def proj(w):
            q, _ = np.linalg.qr(w)
            return q @ q.T

        # the two d x r projection matrices must span the same subspace
        assert np.linalg.norm(proj(ica.linear_w) - proj(pca.linear_w)) <= 1e-6

    @settings(max_examples=15)
    @given(seeds)
    def test_error_monotone_in_r(self, seed):
        x = pixels(seed, d=8)
        errs = [reconstruction_error(x, fit("pca", x, FitConfig(r=r))) for r in range(1, 9)]
        assert all(b <= a + 1e-12 for a, b in itertools.pairwise(errs))
        assert errs[-1] <= 1e-9

    @settings(max_examples=10)
    @given(seeds, st.sampled_from(["pca", "pca_cs", "fastica", "osp", "lpp", "vsrp", "nmf", "dbn"]))
    def test_fits_deterministic(self, seed, method):
        x = pixels(seed, n=80, d=6)
        cfg = FitConfig(r=2, seed=seed % 1000, max_iter=10, dbn_pretrain_epochs=1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            a, b = fit(method, x, cfg), fit(method, x, cfg)
        assert np.array_equal(encode(a, x), encode(b, x))

    @settings(max_examples=5)
    @given(seeds)
    def test_jl_distortion(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((100, 400))
        w = vsrp_matrix(400, 256, seed)
        pairs = rng.integers(0, 100, (50, 2))
        pairs = pairs[pairs[:, 0] != pairs[:, 1]]
        diff = x[pairs[:, 0]] - x[pairs[:, 1]]
        ratio = np.sum((diff @ w) ** 2, axis=1) / (256 * np.sum(diff**2, axis=1))
        assert np.mean((ratio >= 0.7) & (ratio <= 1.3)) >= 0.95

    @settings(max_examples=10)
    @given(seeds, st.floats(0, 1e-2))
    def test_dbn_gradient(self, seed, l1):
        rng = np.random.default_rng(seed)
        x = rng.uniform(0, 1, (20, 5))
        params = [rng.uniform(-0.5, 0.5, (5, 2)), rng.uniform(-0.5, 0.5, 2),
                  rng.uniform(-0.5, 0.5, (2, 5)), rng.uniform(-0.5, 0.5, 5)]
        # keep weights away from the kink of |w| so central differences are valid
        for p in (params[0], params[2]):
            p[np.abs(p) < 1e-3] = 1e-3
        _, grads = autoencoder_loss_grad(params, x, l1=l1)
        h = 1e-5
        for p, g in zip(params, grads):
            num = np.zeros_like(p)
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + h
                up, _ = autoencoder_loss_grad(params, x, l1=l1)
                p[idx] = old - h
                down, _ = autoencoder_loss_grad(params, x, l1=l1)
                p[idx] = old
                num[idx] = (up - down) / (2 * h)
            assert np.linalg.norm(num - g) <= 1e-4 * max(np.linalg.norm(num), 1e-12)


# ---- hsio -----------------------------------------------------------------------------

class TestHsio:
    @settings(max_examples=10)
    @given(seeds)
    def test_clean_scene_reproducible(self, seed):
        spec = SceneSpec(lines=8, samples=9, bands=10, endmember_count=3, noise_sigma=0, seed=seed)
        assert generate_scene(spec)[0] == generate_scene(spec)[0]

    @settings(max_examples=10)
    @given(seeds, st.floats(0.01, 0.2))
    def test_stripes_are_column_gains(self, seed, sigma):
        base = SceneSpec(lines=8, samples=9, bands=10, endmember_count=3, noise_sigma=0, seed=seed)
        striped = SceneSpec(**{**base.to_dict(), "stripe_sigma": sigma})
        clean = generate_scene(base)[0].values
        dirty = generate_scene(striped)[0].values
        gains = stripe_gains(striped)
        assert np.abs(dirty / gains[None, :, None] - clean).max() <= 1e-12

    @settings(max_examples=10)
    @given(seeds)
    def test_labels_partition_pixels(self, seed):
        spec = SceneSpec(lines=8, samples=9, bands=10, endmember_count=3, seed=seed)
        labels = generate_scene(spec)[1]
        assert np.array_equal(np.sort(labels.pixel_index), np.arange(72))

    @given(arrays(np.float64, st.tuples(st.integers(2, 30), st.integers(1, 5)),
                  elements=st.floats(-1e3, 1e3)))
    def test_standardize_idempotent(self, z):
        once = standardize(z)
        assert np.abs(standardize(once) - once).max() <= 1e-9


# ---- metrics --------------------------------------------------------------------------

class TestMetrics:
    @given(seeds, st.integers(2, 20), st.integers(2, 20),
           st.floats(-1e3, 1e3), st.floats(1e-3, 1e3))
    def test_atpv_invariances(self, seed, lines, samples, shift, scale):
        img = random_matrix(seed, lines, samples)
        base = atpv(img)
        assert 0.0 <= base <= 1.0
        assert atpv(img + shift) == pytest.approx(base, abs=1e-8)
        assert atpv(scale * img) == pytest.approx(base, abs=1e-8)

    @given(seeds, st.integers(2, 20), st.integers(2, 20))
    def test_atpv_limits(self, seed, lines, samples):
        rng = np.random.default_rng(seed)
        row = rng.standard_normal(samples)
        col = rng.standard_normal(lines)
        assume(np.ptp(row) > 0 and np.ptp(col) > 0)
        assert atpv(np.tile(row, (lines, 1))) == 1.0
        assert atpv(np.tile(col[:, None], (1, samples))) == 0.0


# ---- tasks ----------------------------------------------------------------------------

class TestTasks:
    @given(seeds, st.floats(1e-6, 1e6), st.floats(1e-6, 1e6))
    def test_sam_scale_invariant(self, seed, a, b):
        z = random_matrix(seed, 20, 4)
        t = random_matrix(seed + 1, 1, 4).ravel()
        assert np.abs(sam_map(a * z, b * t) - sam_map(z, t)).max() <= 1e-12

    @given(seeds, st.integers(1, 6))
    def test_ace_linear_invariance(self, seed, r):
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((60, r))
        t = rng.standard_normal(r)
        c = random_spd(seed + 2, r)
        a = rng.standard_normal((r, r)) + 3 * np.eye(r)
        assume(np.linalg.cond(a) < 1e4)
        moved = ace_map(z @ a.T, a @ t, a @ c @ a.T)
        assert np.abs(moved - ace_map(z, t, c)).max() <= 1e-8

    @given(seeds, st.integers(1, 6))
    def test_ace_identity_is_sam(self, seed, r):
        z = random_matrix(seed, 30, r)
        t = random_matrix(seed + 1, 1, r).ravel()
        assert np.abs(ace_map(z, t, np.eye(r)) - sam_map(z, t)).max() <= 1e-10

    @given(seeds, st.integers(5, 80))
    def test_sweep_is_argmax(self, seed, n):
        rng = np.random.default_rng(seed)
        scores = np.round(rng.standard_normal(n), 1)
        truth = rng.random(n) < 0.3
        assume(0 < truth.sum() < n and np.ptp(scores) > 0)
        res = sweep_threshold(scores, truth)
        for thr in np.concatenate([[scores.min() - 1], np.unique(scores)]):
            pred = scores > thr
            tp = np.sum(pred & truth)
            f1 = 2 * tp / (pred.sum() + truth.sum())
            assert res.f1 >= f1 - 1e-15
        for v in (res.f1, res.iou, res.precision, res.recall):
            assert 0.0 <= v <= 1.0

    @settings(max_examples=15)
    @given(seeds, st.integers(2, 4))
    def test_svm_objective_below_zero(self, seed, k):
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((90, 3))
        y = np.arange(90) % k
        m = svm_train_ovr(z, y)
        xa = np.hstack([z, np.ones((90, 1))])
        sign = np.where(y[:, None] == np.arange(k), 1.0, -1.0)
        w = np.hstack([m.weights, -m.offsets[:, None]])
        assert np.all(hinge_objective(w, xa, sign, m.lam) <= hinge_objective(0 * w, xa, sign, m.lam))

    @given(st.integers(2, 6), st.integers(1, 30), seeds)
    def test_balanced_aa_equals_oa(self, k, per, seed):
        rng = np.random.default_rng(seed)
        truth = np.repeat(np.arange(k), per)
        pred = rng.integers(0, k, truth.size)
        rep = accuracy_metrics(pred, truth)
        assert rep.average == rep.overall

