"""Linear reducers: PCA, column-sampling PCA, FastICA, OSP (ATGP), LPP and VSRP."""

import warnings

import numpy as np
from scipy import sparse

from .. import numerics
from ..errors import DegenerateData, InvalidInput, NotConvergedWarning, NumericalFailure
from ..hsio import sample_indices
from .base import FittedReducer

__all__ = [
    "fit_fastica",
    "fit_lpp",
    "fit_osp",
    "fit_pca",
    "fit_pca_cs",
    "fit_vsrp",
    "knn_adjacency",
    "lpp_matrices",
    "osp_projector",
]


def _as_data(x, min_rows=1):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidInput(f"data must be an N x d matrix, got shape {x.shape}")
    if x.shape[0] < min_rows:
        raise InvalidInput(f"need at least {min_rows} pixels, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise InvalidInput("data contains non-finite values")
    return x


def _sign_fix(w):
    """Flip columns so each one's largest-magnitude entry is positive."""
    if w.size == 0:
        return w
    idx = np.argmax(np.abs(w), axis=0)
    signs = np.sign(w[idx, np.arange(w.shape[1])])
    signs[signs == 0] = 1.0
    return w * signs


def _centre(x):
    mean = x.mean(axis=0)
    xc = x - mean
    if not np.any(xc):
        raise DegenerateData("all pixels are identical")
    return mean, xc


def _pca_basis(xc):
    """Right singular vectors and component variances of centred data."""
    res = numerics.svd(xc / np.sqrt(xc.shape[0] - 1), compute_u=False)
    return res.vt.T, res.singular_values**2


def fit_pca(x, cfg):
    x = _as_data(x, min_rows=2)
    cfg.validate(x.shape[1], allow_zero=True)
    mean, xc = _centre(x)
    v, var = _pca_basis(xc)
    w = _sign_fix(v[:, :cfg.r])
    return FittedReducer("pca", cfg.r, x.shape[1], centers_data=True, linear_w=w, mean=mean,
                         seed=cfg.seed, info={"explained_variance": var[:cfg.r].copy()})


def fit_pca_cs(x, cfg):
    """Column-sampling approximation to PCA.

    ``c = cs_columns`` (default ``r``) band indices are drawn at random; only
    the ``d x c`` block ``L = [S11; S21]`` of the covariance is formed. With
    ``L = U diag(s) V^T`` the Nystrom-type approximation
    ``S ~ L S11^+ L^T = U M U^T`` gives the components as ``U`` rotated by the
    eigenvectors of the small matrix ``M``, ordered by approximate variance.
    """
    x = _as_data(x, min_rows=2)
    n, d = x.shape
    cfg.validate(d)
    c = cfg.cs_columns if cfg.cs_columns is not None else cfg.r
    if not cfg.r <= c <= d:
        raise InvalidInput(f"cs_columns={c} must satisfy r <= cs_columns <= d")
    rng = np.random.default_rng(cfg.seed)
    cols = np.sort(rng.choice(d, size=c, replace=False))
    mean = x.mean(axis=0)
    # centred covariance columns without forming the centred matrix
    lmat = (x.T @ x[:, cols] - n * np.outer(mean, mean[cols])) / n
    s11 = lmat[cols]
    ev = numerics.sym_eig(0.5 * (s11 + s11.T)).eigenvalues
    if ev[-1] <= 0 or ev[0] <= 1e-12 * ev[-1]:
        raise NumericalFailure("sampled covariance block S11 is rank-deficient")
    res = numerics.svd(lmat)
    u, s, vt = res.u, res.singular_values, res.vt
    core = (s[:, None] * vt) @ numerics.pinv(s11) @ (vt.T * s)
    eig = numerics.sym_eig(0.5 * (core + core.T), ascending=False)
    w = u @ eig.eigenvectors[:, :cfg.r]
    # re-orthonormalise against rounding
    q = numerics.svd(w)
    w = _sign_fix(q.u @ q.vt)
    return FittedReducer("pca_cs", cfg.r, d, centers_data=True, linear_w=w, mean=mean,
                         seed=cfg.seed,
                         info={"columns": cols, "explained_variance": eig.eigenvalues[:cfg.r].copy()})


def _sym_decorrelate(w):
    """``(W W^T)^(-1/2) W``: the rows become orthonormal."""
    eig = numerics.sym_eig(w @ w.T)
    lam = np.maximum(eig.eigenvalues, np.finfo(float).tiny)
    e = eig.eigenvectors
    return (e / np.sqrt(lam)) @ e.T @ w


def _fastica_symmetric(z, w, alpha, tol, max_iter):
    n = z.shape[0]
    best = (np.inf, w)
    for it in range(1, max_iter + 1):
        wz = z @ w.T
        g = np.tanh(alpha * wz)
        g_prime = alpha * (1.0 - g * g)
        w_new = _sym_decorrelate((g.T @ z) / n - g_prime.mean(axis=0)[:, None] * w)
        delta = np.max(np.abs(np.abs(np.einsum("ij,ij->i", w_new, w)) - 1.0))
        w = w_new
        if delta < best[0]:
            best = (delta, w)
        if delta <= tol:
            return w, True, it
    return best[1], False, max_iter


def fit_fastica(x, cfg):
    """Symmetric FastICA with ``g(u) = log cosh(alpha u) / alpha`` in the top-r whitened space."""
    x = _as_data(x, min_rows=2)
    n, d = x.shape
    cfg.validate(d, allow_zero=True)
    r = cfg.r
    if n <= r:
        raise InvalidInput(f"FastICA needs N > r, got N={n}, r={r}")
    mean, xc = _centre(x)
    v, var = _pca_basis(xc)
    if r == 0:
        return FittedReducer("fastica", 0, d, centers_data=True, linear_w=np.zeros((d, 0)),
                             mean=mean, seed=cfg.seed)
    if var[r - 1] <= 1e-12 * var[0]:
        raise DegenerateData(f"data has fewer than r={r} non-degenerate directions")
    whitener = v[:, :r] / np.sqrt(var[:r])
    z = xc @ whitener
    tol = cfg.tol if cfg.tol is not None else 1e-4
    max_iter = cfg.max_iter if cfg.max_iter is not None else 200

    seed = cfg.seed
    for attempt in range(2):
        rng = np.random.default_rng(seed)
        w0 = _sym_decorrelate(rng.standard_normal((r, r)))
        w, converged, iters = _fastica_symmetric(z, w0, cfg.ica_alpha, tol, max_iter)
        if converged:
            break
        seed = seed + 1
    if not converged:
        warnings.warn(f"FastICA did not converge in {max_iter} iterations after a restart",
                      NotConvergedWarning, stacklevel=2)
    lw = whitener @ w.T
    return FittedReducer("fastica", r, d, centers_data=True, linear_w=_sign_fix(lw), mean=mean,
                         seed=cfg.seed, converged=converged,
                         info={"iterations": iters, "restarts": attempt})


def osp_projector(omega):
    """``I - omega pinv(omega)``; the identity for an empty ``omega``."""
    omega = np.asarray(omega, dtype=np.float64)
    d = omega.shape[0]
    return np.eye(d) - omega @ numerics.pinv(omega)


def fit_osp(x, cfg):
    """Automatic target generation: repeatedly pick the pixel with the largest
    residual energy after projecting out the span of the pixels already picked."""
    x = _as_data(x)
    n, d = x.shape
    cfg.validate(d)
    if n < cfg.r:
        raise InvalidInput(f"OSP needs N >= r, got N={n}, r={cfg.r}")
    chosen = []
    resid = x
    energy = np.einsum("ij,ij->i", x, x)
    top = energy.max()
    if top == 0:
        raise DegenerateData("all pixels are zero")
    for _ in range(cfg.r):
        j = int(np.argmax(energy))
        if j in chosen or energy[j] <= 1e-20 * top:
            raise DegenerateData(f"OSP selected pixel {j} twice; data span exhausted")
        chosen.append(j)
        omega = x[chosen].T
        resid = x - (x @ numerics.pinv(omega).T) @ omega.T
        energy = np.einsum("ij,ij->i", resid, resid)
    return FittedReducer("osp", cfg.r, d, linear_w=x[chosen].T.copy(), seed=cfg.seed,
                         info={"pixel_index": np.array(chosen)})


def knn_adjacency(x, k, block_elems=20_000_000):
    """Binary kNN graph (Euclidean, self excluded), symmetrised by logical OR.

    Returns a CSR matrix with ``G[i, j] = 1`` when ``i`` is among the ``k``
    nearest neighbours of ``j`` or vice versa. Neighbours are found by
    exhaustive search, blockwise to bound memory.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < k + 1:
        raise InvalidInput(f"kNN graph needs at least k+1={k + 1} points, got {n}")
    sq = np.einsum("ij,ij->i", x, x)
    step = max(1, block_elems // n)
    nbrs = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, step):
        stop = min(n, start + step)
        # squared distance minus the per-row constant |x_i|^2
        dist = sq[None, :] - 2.0 * (x[start:stop] @ x.T)
        dist[np.arange(stop - start), np.arange(start, stop)] = np.inf
        part = np.argpartition(dist, k - 1, axis=1)[:, :k] if k < n - 1 else \
            np.argsort(dist, axis=1)[:, :k]
        nbrs[start:stop] = part
    rows = np.repeat(np.arange(n), k)
    g = sparse.csr_matrix((np.ones(n * k), (nbrs.ravel(), rows)), shape=(n, n))
    g = g.maximum(g.T)
    g.data[:] = 1.0
    return g


def lpp_matrices(x, k):
    """``(X^T L X, X^T D X)`` for the kNN graph of the rows of ``x``."""
    g = knn_adjacency(x, k)
    deg = np.asarray(g.sum(axis=1)).ravel()
    xdx = (x * deg[:, None]).T @ x
    xgx = x.T @ (g @ x)
    xlx = xdx - xgx
    return 0.5 * (xlx + xlx.T), 0.5 * (xdx + xdx.T)


def fit_lpp(x, cfg):
    x = _as_data(x)
    n, d = x.shape
    cfg.validate(d)
    if cfg.lpp_subsample is not None and n > cfg.lpp_subsample:
        xs = x[sample_indices(n, cfg.lpp_subsample, cfg.seed)]
    else:
        xs = x
    if xs.shape[0] < cfg.lpp_k + 1:
        raise InvalidInput(f"LPP needs at least lpp_k+1={cfg.lpp_k + 1} pixels")
    a, b = lpp_matrices(xs, cfg.lpp_k)
    res = numerics.gen_sym_eig(a, b, ascending=True)
    w = res.eigenvectors[:, :cfg.r]
    norms = np.linalg.norm(w, axis=0)
    if not np.all(np.isfinite(w)) or np.any(norms == 0):
        raise NumericalFailure("LPP eigenvectors are degenerate")
    return FittedReducer("lpp", cfg.r, d, linear_w=_sign_fix(w), seed=cfg.seed,
                         info={"eigenvalues": res.eigenvalues[:cfg.r].copy(),
                               "n_graph": xs.shape[0]})


def vsrp_matrix(d, r, seed):
    """Very sparse random projection with ``c = sqrt(d)``: entries are
    ``+sqrt(c)`` w.p. ``1/(2c)``, ``-sqrt(c)`` w.p. ``1/(2c)``, else 0."""
    c = np.sqrt(d)
    u = np.random.default_rng(seed).random((d, r))
    val = np.sqrt(c)
    return np.where(u < 0.5 / c, val, np.where(u < 1.0 / c, -val, 0.0))


def fit_vsrp(x, cfg):
    x = _as_data(x)
    d = x.shape[1]
    cfg.validate(d, allow_zero=True)
    return FittedReducer("vsrp", cfg.r, d, centers_data=True,
                         linear_w=vsrp_matrix(d, cfg.r, cfg.seed), mean=x.mean(axis=0),
                         seed=cfg.seed)
