"""Dense linear-algebra kernels used by the reducers.

``svd`` and ``sym_eig`` take a ``method`` argument. ``"lapack"`` (default)
delegates to numpy's LAPACK drivers. ``"jacobi"`` runs the in-house solvers:
one-sided (Hestenes) Jacobi for the SVD and two-sided cyclic Jacobi for the
symmetric eigenproblem. Both sweep index pairs in round-robin (tournament)
order so each round is a set of disjoint pairs applied as one vectorized
rotation. Tall inputs are first reduced to their triangular QR factor so the
sweeps only touch an ``n x n`` matrix.

All kernels are deterministic pure functions.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidInput, NumericalFailure

__all__ = [
    "EigResult",
    "SvdResult",
    "cholesky",
    "gen_sym_eig",
    "nnls",
    "nnls_batch",
    "pinv",
    "svd",
    "sym_eig",
]

MAX_SWEEPS = 60
GEN_EIG_RIDGE = 1e-10
_EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class SvdResult:
    u: np.ndarray
    singular_values: np.ndarray
    vt: np.ndarray


@dataclass(frozen=True)
class EigResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _as_matrix(a, name="a"):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise InvalidInput(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return a


@lru_cache(maxsize=64)
def _round_robin(n):
    """Disjoint pair schedule covering every (p, q), p < q, once per sweep."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p, q = [], []
        for i in range(m // 2):
            a, b = players[i], players[m - 1 - i]
            if a < n and b < n:
                p.append(min(a, b))
                q.append(max(a, b))
        rounds.append((np.array(p, dtype=np.intp), np.array(q, dtype=np.intp)))
        players = [players[0], players[-1]] + players[1:-1]
    return tuple(rounds)


def _hestenes(rows):
    """Orthogonalize the rows of ``rows`` in place by plane rotations.

    Returns the accumulated rotation ``v`` (rows are rotated as ``v.T @ rows``
    would be, i.e. ``rows_out = v.T @ rows_in``).
    """
    n, m = rows.shape
    v = np.eye(n)
    if n < 2:
        return v
    tol = _EPS * max(m, n)
    schedule = _round_robin(n)
    for _ in range(MAX_SWEEPS):
        rotated = False
        for p, q in schedule:
            rp = rows[p]
            rq = rows[q]
            alpha = np.einsum("ij,ij->i", rp, rp)
            beta = np.einsum("ij,ij->i", rq, rq)
            gamma = np.einsum("ij,ij->i", rp, rq)
            need = np.abs(gamma) > tol * np.sqrt(alpha * beta)
            if not need.any():
                continue
            rotated = True
            if not need.all():
                p, q = p[need], q[need]
                rp, rq = rp[need], rq[need]
                alpha, beta, gamma = alpha[need], beta[need], gamma[need]
            zeta = (beta - alpha) / (2.0 * gamma)
            t = np.copysign(1.0, zeta) / (np.abs(zeta) + np.hypot(1.0, zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = (c * t)[:, None]
            c = c[:, None]
            rows[p] = c * rp - s * rq
            rows[q] = s * rp + c * rq
            vp = v[p]
            vq = v[q]
            v[p] = c * vp - s * vq
            v[q] = s * vp + c * vq
        if not rotated:
            return v.T
    raise NumericalFailure(f"Jacobi SVD did not converge in {MAX_SWEEPS} sweeps")


def _complete_orthonormal(u, good):
    """Replace the columns of ``u`` not flagged in ``good`` by an orthonormal
    completion of the flagged ones."""
    m = u.shape[0]
    basis = [u[:, j] for j in np.flatnonzero(good)]
    out = u.copy()
    candidates = iter(range(m))
    for j in np.flatnonzero(~good):
        while True:
            e = np.zeros(m)
            e[next(candidates)] = 1.0
            for _ in range(2):
                for b in basis:
                    e -= (b @ e) * b
            norm = np.linalg.norm(e)
            if norm > 0.5:
                e /= norm
                break
        basis.append(e)
        out[:, j] = e
    return out


def _check_method(method):
    if method not in ("lapack", "jacobi"):
        raise InvalidInput(f"unknown method {method!r}; expected 'lapack' or 'jacobi'")


def svd(a, method="lapack", compute_u=True) -> SvdResult:
    """Thin SVD ``a = u @ diag(s) @ vt`` with ``s`` sorted descending.

    With ``compute_u=False`` the result's ``u`` is None, which for tall
    inputs skips forming the orthogonal QR factor.
    """
    a = _as_matrix(a)
    _check_method(method)
    m, n = a.shape
    if m == 0 or n == 0:
        raise InvalidInput(f"svd needs a non-empty matrix, got shape {a.shape}")
    if m < n:
        res = svd(a.T, method)
        return SvdResult(res.vt.T if compute_u else None, res.singular_values, res.u.T)

    if m > n:
        # Householder QR; only the n x n factor enters the inner SVD
        if compute_u:
            q, r = np.linalg.qr(a, mode="reduced")
        else:
            q, r = None, np.linalg.qr(a, mode="r")
    else:
        q, r = None, a
    if method == "lapack":
        u_small, s, vt = np.linalg.svd(r)
        if not compute_u:
            return SvdResult(None, s, vt)
        return SvdResult(u_small if q is None else q @ u_small, s, vt)

    rows = np.ascontiguousarray(r.T)
    v = _hestenes(rows)
    s = np.sqrt(np.einsum("ij,ij->i", rows, rows))
    order = np.argsort(-s, kind="stable")
    s = s[order]
    rows = rows[order]
    v = v[:, order]

    good = s > np.finfo(np.float64).tiny * 1e8 * max(1.0, s[0] if s.size else 1.0)
    if not compute_u:
        return SvdResult(None, np.where(good, s, 0.0), v.T)
    u_small = np.zeros((n, n))
    u_small[:, good] = (rows[good] / s[good, None]).T
    if not good.all():
        u_small = _complete_orthonormal(u_small, good)
        s = np.where(good, s, 0.0)
    u = u_small if q is None else q @ u_small
    return SvdResult(u, s, v.T)


def _check_symmetric(a, name="a"):
    a = _as_matrix(a, name)
    if a.shape[0] != a.shape[1]:
        raise InvalidInput(f"{name} must be square, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
    if a.size and np.max(np.abs(a - a.T)) > 1e-10 * scale:
        raise InvalidInput(f"{name} is not symmetric")
    return 0.5 * (a + a.T)


def _sort_eig(w, v, ascending):
    order = np.argsort(w if ascending else -w, kind="stable")
    return EigResult(w[order], v[:, order])


def sym_eig(a, ascending=True, method="lapack") -> EigResult:
    """Eigen-decomposition of a symmetric matrix, eigenvectors as columns."""
    a = _check_symmetric(a).copy()
    _check_method(method)
    if method == "lapack":
        w, v = np.linalg.eigh(a)
        return _sort_eig(w, v, ascending)
    n = a.shape[0]
    v = np.eye(n)
    if n < 2:
        return _sort_eig(np.diag(a).copy(), v, ascending)
    norm = np.linalg.norm(a)
    if norm == 0.0:
        return _sort_eig(np.zeros(n), v, ascending)
    floor = _EPS * 1e-3 * norm
    schedule = _round_robin(n)
    for _ in range(MAX_SWEEPS):
        rotated = False
        for p, q in schedule:
            apq = a[p, q]
            app = a[p, p]
            aqq = a[q, q]
            need = (np.abs(apq) > _EPS * np.sqrt(np.abs(app * aqq))) & (np.abs(apq) > floor)
            if not need.any():
                continue
            rotated = True
            if not need.all():
                p, q = p[need], q[need]
                apq, app, aqq = apq[need], app[need], aqq[need]
            theta = (aqq - app) / (2.0 * apq)
            t = np.copysign(1.0, theta) / (np.abs(theta) + np.hypot(1.0, theta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            # columns: A <- A J
            cp = a[:, p]
            cq = a[:, q]
            a[:, p] = cp * c - cq * s
            a[:, q] = cp * s + cq * c
            # rows: A <- J^T A
            rp = a[p]
            rq = a[q]
            a[p] = c[:, None] * rp - s[:, None] * rq
            a[q] = s[:, None] * rp + c[:, None] * rq
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp = v[:, p]
            vq = v[:, q]
            v[:, p] = vp * c - vq * s
            v[:, q] = vp * s + vq * c
        if not rotated:
            return _sort_eig(np.diag(a).copy(), v, ascending)
    raise NumericalFailure(f"Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps")


def cholesky(a):
    """Lower-triangular ``l`` with ``l @ l.T == a``; raises on a non-positive pivot."""
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    low = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - low[j, :j] @ low[j, :j]
        if not d > 0.0:
            raise NumericalFailure(f"matrix is not positive definite (pivot {j} = {d:.3e})")
        low[j, j] = np.sqrt(d)
        low[j + 1:, j] = (a[j + 1:, j] - low[j + 1:, :j] @ low[j, :j]) / low[j, j]
    return low


def _solve_lower(low, b):
    x = np.array(b, dtype=np.float64)
    for i in range(low.shape[0]):
        x[i] = (x[i] - low[i, :i] @ x[:i]) / low[i, i]
    return x


def _solve_upper(up, b):
    x = np.array(b, dtype=np.float64)
    for i in range(up.shape[0] - 1, -1, -1):
        x[i] = (x[i] - up[i, i + 1:] @ x[i + 1:]) / up[i, i]
    return x


def gen_sym_eig(a, b, ascending=True, method="lapack") -> EigResult:
    """Solve ``a v = lambda b v`` for symmetric ``a`` and PSD ``b``.

    ``b`` is Cholesky-factored as given when every squared pivot exceeds the
    ridge level ``GEN_EIG_RIDGE * trace(b) / n``; otherwise that ridge is
    added first. Regularising a well-conditioned ``b`` would shift each pair
    by ``lambda * ridge``, which matters when ``b`` is large. Eigenvectors
    come out b-orthonormal (with respect to the factored matrix).
    """
    a = _check_symmetric(a, "a")
    b = _check_symmetric(b, "b")
    n = a.shape[0]
    if b.shape != (n, n):
        raise InvalidInput(f"a and b shapes differ: {a.shape} vs {b.shape}")
    ridge = GEN_EIG_RIDGE * np.trace(b) / max(n, 1)
    try:
        low = cholesky(b)
        if n and np.min(np.diag(low)) ** 2 <= ridge:
            raise NumericalFailure("near-singular b")
    except NumericalFailure:
        try:
            low = cholesky(b + ridge * np.eye(n))
        except NumericalFailure as exc:
            raise NumericalFailure(f"b is singular beyond regularization: {exc}") from None
    # c = L^-1 a L^-T
    tmp = _solve_lower(low, a)
    c = _solve_lower(low, tmp.T)
    res = sym_eig(0.5 * (c + c.T), ascending, method)
    vecs = _solve_upper(low.T, res.eigenvectors)
    return EigResult(res.eigenvalues, vecs)


def pinv(a, rcond=None, method="lapack"):
    """Moore-Penrose pseudoinverse; an empty input gives the transposed-shape empty result."""
    a = _as_matrix(a)
    m, n = a.shape
    if m == 0 or n == 0:
        return np.zeros((n, m))
    res = svd(a, method)
    s = res.singular_values
    if rcond is None:
        rcond = max(m, n) * _EPS
    keep = s > rcond * s[0]
    inv_s = np.zeros_like(s)
    inv_s[keep] = 1.0 / s[keep]
    return (res.vt.T * inv_s) @ res.u.T


def nnls(a, b, tol=None):
    """Lawson-Hanson active-set solution of ``min ||a x - b||, x >= 0``."""
    a = _as_matrix(a)
    b = np.asarray(b, dtype=np.float64).ravel()
    m, n = a.shape
    if n < 1:
        raise InvalidInput("nnls needs at least one column")
    if b.shape[0] != m:
        raise InvalidInput(f"b has length {b.shape[0]}, expected {m}")
    if not np.all(np.isfinite(b)):
        raise InvalidInput("b contains non-finite entries")
    if tol is None:
        tol = 10 * _EPS * max(m, n) * max(1.0, np.abs(a).max()) * max(1.0, np.abs(b).max())

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    w = a.T @ b
    max_iter = 3 * n
    it = 0
    while not passive.all() and np.max(np.where(passive, -np.inf, w)) > tol:
        if it >= max_iter:
            raise NumericalFailure(f"nnls exceeded {max_iter} iterations")
        it += 1
        passive[np.argmax(np.where(passive, -np.inf, w))] = True
        while True:
            idx = np.flatnonzero(passive)
            s = np.zeros(n)
            s[idx] = pinv(a[:, idx]) @ b
            if np.all(s[idx] > 0):
                break
            bad = idx[s[idx] <= 0]
            step = np.min(x[bad] / (x[bad] - s[bad]))
            x = x + step * (s - x)
            passive &= x > tol
            x[~passive] = 0.0
            if not passive.any():
                s = np.zeros(n)
                break
        x = s
        w = a.T @ (b - a @ x)
    return x


def _solve_spd_many(gram, rhs):
    low = cholesky(gram)
    return _solve_upper(low.T, _solve_lower(low, rhs))


def nnls_batch(a, b, max_iter=None):
    """Solve many NNLS problems ``min ||a x_j - b_j||`` sharing one matrix.

    ``b`` is ``m x k`` (one right-hand side per column); the result is
    ``n x k``. Uses block principal pivoting on the normal equations,
    grouping columns that share a passive set. Requires ``a`` with full
    column rank, the case every caller here has (NMF bases).
    """
    a = _as_matrix(a)
    b = _as_matrix(b, "b")
    if b.ndim == 1:
        b = b[:, None]
    n = a.shape[1]
    k = b.shape[1]
    ata = a.T @ a
    atb = a.T @ b
    if max_iter is None:
        max_iter = 10 * n + 50
    ridge = _EPS * n * np.trace(ata) / max(n, 1)
    ata_r = ata + ridge * np.eye(n)

    passive = np.zeros((n, k), dtype=bool)
    x = np.zeros((n, k))
    y = -atb
    alpha = np.full(k, 3)
    ninf = np.full(k, n + 1)
    # feasibility tolerances relative to each column's scale, so rounding-level
    # negatives do not make the pivoting cycle
    y_tol = 1e-12 * (np.abs(atb).max(axis=0) + np.sqrt(np.diag(ata)).max() * _EPS)
    diag = np.maximum(np.diag(ata), np.finfo(float).tiny)
    x_tol = 1e-12 * (np.abs(atb) / diag[:, None]).max(axis=0)
    for _ in range(max_iter):
        infeas = (passive & (x < -x_tol)) | (~passive & (y < -y_tol))
        count = infeas.sum(axis=0)
        todo = np.flatnonzero(count > 0)
        if todo.size == 0:
            break
        for j in todo:
            if count[j] < ninf[j]:
                ninf[j] = count[j]
                alpha[j] = 3
                passive[infeas[:, j], j] ^= True
            elif alpha[j] > 0:
                alpha[j] -= 1
                passive[infeas[:, j], j] ^= True
            else:
                last = np.flatnonzero(infeas[:, j])[-1]
                passive[last, j] ^= True
        # re-solve only the changed columns, grouped by passive pattern
        keys = np.packbits(passive[:, todo], axis=0)
        _, inverse = np.unique(keys, axis=1, return_inverse=True)
        inverse = np.asarray(inverse).ravel()
        for g in range(inverse.max() + 1):
            cols = todo[inverse == g]
            mask = passive[:, cols[0]]
            xs = np.zeros((n, cols.size))
            if mask.any():
                sub = ata_r[np.ix_(mask, mask)]
                xs[mask] = _solve_spd_many(sub, atb[np.ix_(mask, cols)])
            x[:, cols] = xs
            ys = ata @ xs - atb[:, cols]
            ys[mask] = 0.0
            y[:, cols] = ys
    else:
        raise NumericalFailure(f"batched nnls exceeded {max_iter} iterations")
    x[~passive] = 0.0
    return np.maximum(x, 0.0)
