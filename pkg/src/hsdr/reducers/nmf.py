"""NMF by multiplicative updates, initialised from OSP, with unit-norm basis columns."""

import warnings

import numpy as np

from .. import numerics
from ..errors import DegenerateData
from .base import FittedReducer
from .linear import _as_data, fit_osp

_GUARD = 1e-12


def _normalise(w, h):
    norms = np.linalg.norm(w, axis=0)
    norms[norms == 0] = 1.0
    return w / norms, h * norms[:, None]


def _objective(v, w, h):
    return float(np.linalg.norm(v - w @ h))


def fit_nmf(x, cfg):
    """Factor the pixels as ``X^T ~ W H`` with ``W`` (d x r) and ``H`` (r x N) nonnegative.

    The objective history (Frobenius residual: the initial value, one entry
    per multiplicative iteration, then the value after a closing exact
    nonnegative least-squares H step) is kept on the model.
    """
    x = _as_data(x)
    d = x.shape[1]
    cfg.validate(d)
    if np.any(x < 0):
        warnings.warn("NMF input has negative entries; clipping them to 0", stacklevel=2)
        x = np.maximum(x, 0.0)
    if not np.any(x):
        raise DegenerateData("NMF input is the zero matrix")
    tol = cfg.tol if cfg.tol is not None else 1e-5
    max_iter = cfg.max_iter if cfg.max_iter is not None else 500

    v = x.T
    w, _ = _normalise(fit_osp(x, cfg.with_(tol=None, max_iter=None)).linear_w, np.zeros((cfg.r, 0)))
    h = numerics.nnls_batch(w, v)
    # multiplicative updates cannot leave an exact zero, so lift the NNLS zeros
    # (and any zero basis entries) to a small positive floor
    h = np.maximum(h, 1e-3 * h.max())
    w = np.maximum(w, 1e-3 * w.max())
    w, h = _normalise(w, h)
    history = [_objective(v, w, h)]
    converged = False
    for _ in range(max_iter):
        h *= (w.T @ v) / (w.T @ w @ h + _GUARD)
        w *= (v @ h.T) / (w @ (h @ h.T) + _GUARD)
        w, h = _normalise(w, h)
        history.append(_objective(v, w, h))
        prev, cur = history[-2], history[-1]
        if prev == 0 or abs(prev - cur) / prev < tol:
            converged = True
            break
    # closing exact H step: the codes encode() produces for the training pixels
    h_opt = numerics.nnls_batch(w, v)
    final = _objective(v, w, h_opt)
    if final <= history[-1]:
        history.append(final)
    return FittedReducer("nmf", cfg.r, d, nmf_basis=w, seed=cfg.seed, converged=converged,
                         history=np.array(history),
                         info={"relative_residual": history[-1] / np.linalg.norm(v)})
