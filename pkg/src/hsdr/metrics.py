"""Unsupervised evaluation: reconstruction error, kNN mutual information, ATPV and fit timing."""

import time
import warnings
import zlib
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma

from .errors import DegenerateColumnWarning, DegenerateData, InvalidInput
from .hsio import sample_indices
from .reducers import decode, encode, fit

MI_JITTER = 1e-10


@dataclass(frozen=True)
class MiMatrix:
    """Pairwise mutual information (nats) between components; the diagonal is 0."""

    values: np.ndarray
    sample_size: int
    knn_k: int


@dataclass(frozen=True)
class TimingRecord:
    method: str
    pixel_count: int
    band_count: int
    run_durations: tuple
    median_seconds: float


def reconstruction_error(x, m):
    """Mean over pixels of ``|x_i - decode(encode(x_i))|^2 / (|x_i|^2 + 1e-12)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise InvalidInput(f"x must be a nonempty N x d matrix, got shape {x.shape}")
    if x.shape[1] != m.d:
        raise InvalidInput(f"x has {x.shape[1]} bands, model expects {m.d}")
    return relative_error(x, decode(m, encode(m, x)))


def relative_error(x, x_hat):
    """Per-pixel relative squared error, averaged; the core of :func:`reconstruction_error`."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape or x.ndim != 2 or x.shape[0] == 0:
        raise InvalidInput(f"shape mismatch: {x.shape} vs {x_hat.shape}")
    diff = x - x_hat
    num = np.einsum("ij,ij->i", diff, diff)
    den = np.einsum("ij,ij->i", x, x) + 1e-12
    return float(np.mean(num / den))


def _jittered(v, seed):
    std = v.std()
    salt = zlib.crc32(v.tobytes())
    rng = np.random.default_rng([salt, seed])
    return v + MI_JITTER * std * rng.standard_normal(v.shape[0])


def _count_within(sorted_vals, centres, radius):
    """Number of other points with ``|v - centre| < radius`` (strict)."""
    lo = np.searchsorted(sorted_vals, centres - radius, side="right")
    hi = np.searchsorted(sorted_vals, centres + radius, side="left")
    return hi - lo - 1


def mutual_info_knn(a, b, k=3, seed=0):
    """KSG estimator #1 (max-norm) of I(a; b) in nats, clamped at 0.

    Ties are broken by a tiny jitter whose stream depends on the column
    contents and ``seed``, so the estimate is deterministic. The two
    arguments are put in a canonical order first, which makes the
    result exactly symmetric.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    n = a.shape[0]
    if b.shape[0] != n:
        raise InvalidInput(f"length mismatch: {n} vs {b.shape[0]}")
    if k < 1:
        raise InvalidInput("k must be >= 1")
    if n < 10 * k:
        raise InvalidInput(f"need at least 10*k = {10 * k} samples, got {n}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InvalidInput("inputs contain non-finite values")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        warnings.warn("constant column in mutual information; returning 0",
                      DegenerateColumnWarning, stacklevel=2)
        return 0.0
    if a.tobytes() > b.tobytes():
        a, b = b, a
    a = _jittered(a, seed)
    b = _jittered(b, seed + 1)
    pts = np.column_stack([a, b])
    tree = cKDTree(pts)
    dist, _ = tree.query(pts, k=k + 1, p=np.inf)
    eps = dist[:, k]
    nx = _count_within(np.sort(a), a, eps)
    ny = _count_within(np.sort(b), b, eps)
    mi = digamma(k) + digamma(n) - np.mean(digamma(nx + 1) + digamma(ny + 1))
    return max(0.0, float(mi))


def mi_matrix(components, k=3, sample_size=None, seed=0):
    """Pairwise MI between the columns over one shared seed-fixed pixel sample."""
    c = np.asarray(components, dtype=np.float64)
    if c.ndim != 2 or c.shape[1] < 2:
        raise InvalidInput(f"need an N x r matrix with r >= 2, got shape {c.shape}")
    n, r = c.shape
    if sample_size is not None:
        if sample_size > n:
            raise InvalidInput(f"sample_size={sample_size} exceeds N={n}")
        c = c[np.sort(sample_indices(n, sample_size, seed))]
    out = np.zeros((r, r))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateColumnWarning)
        for i in range(r):
            for j in range(i + 1, r):
                out[i, j] = out[j, i] = mutual_info_knn(c[:, i], c[:, j], k=k, seed=seed)
    return MiMatrix(out, c.shape[0], k)


def atpv(image):
    """Across-track proportion of variance of a lines x samples component image.

    Each along-track line (one per across-track position, i.e. a column)
    has its mean removed; ATPV is the fraction of the total variance this
    removes.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 2 or img.shape[1] < 2:
        raise InvalidInput(f"image must be at least 2 x 2, got shape {img.shape}")
    if np.ptp(img) == 0:
        raise DegenerateData("ATPV of a constant image is undefined")
    # exact limits, immune to rounding in the means
    if np.all(img == img[:1, :]):
        return 1.0
    if np.all(img == img[:, :1]):
        return 0.0
    centred = img - img.mean()
    col_means = centred.mean(axis=0)
    v_between = float(np.mean(col_means**2))
    v_within = float(np.mean((centred - col_means) ** 2))
    return min(1.0, max(0.0, v_between / (v_between + v_within)))


def band_atpv(cube, reduce="median"):
    """Per-band ATPV of a cube (NaN for constant bands) and its mean or median over bands."""
    values = np.asarray(cube.values if hasattr(cube, "values") else cube)
    per_band = np.full(values.shape[2], np.nan)
    for j in range(values.shape[2]):
        try:
            per_band[j] = atpv(values[:, :, j])
        except DegenerateData:
            continue
    if np.all(np.isnan(per_band)):
        raise DegenerateData("every band is constant")
    summary = np.nanmedian(per_band) if reduce == "median" else np.nanmean(per_band)
    return per_band, float(summary)


def time_fit(method, x, cfg, repeats=3):
    """Median wall-clock fit time over ``repeats`` identical runs; models are discarded."""
    if repeats < 3 or repeats % 2 == 0:
        raise InvalidInput(f"repeats must be odd and >= 3, got {repeats}")
    x = np.asarray(x, dtype=np.float64)
    runs = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fit(method, x, cfg)
        runs.append(time.perf_counter() - t0)
    return TimingRecord(method, x.shape[0], x.shape[1], tuple(runs),
                        float(sorted(runs)[repeats // 2]))


def loglog_slope(sizes, seconds):
    """Least-squares slope of log(seconds) against log(sizes)."""
    lx = np.log(np.asarray(sizes, dtype=np.float64))
    ly = np.log(np.asarray(seconds, dtype=np.float64))
    return float(np.polyfit(lx, ly, 1)[0])
