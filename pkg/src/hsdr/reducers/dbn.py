"""One-hidden-layer DBN autoencoder: CD pretraining of two RBMs, then gradient fine-tuning."""

import numpy as np

from ..errors import InvalidInput, NumericalFailure
from .base import FittedReducer, _sigmoid
from .linear import _as_data


def _rbm_cd(data, w, b_hid, c_vis, cfg, rng):
    """Contrastive divergence with a deterministic mean-field chain of length ``dbn_chain``.

    Updates ``w`` (visible x hidden) and the biases in place.
    """
    n = data.shape[0]
    vel = [np.zeros_like(w), np.zeros_like(b_hid), np.zeros_like(c_vis)]
    for _ in range(cfg.dbn_pretrain_epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.dbn_batch):
            x0 = data[order[start:start + cfg.dbn_batch]]
            y0 = _sigmoid(x0 @ w + b_hid)
            xi, yi = x0, y0
            for _ in range(cfg.dbn_chain):
                xi = _sigmoid(yi @ w.T + c_vis)
                yi = _sigmoid(xi @ w + b_hid)
            m = x0.shape[0]
            grads = (
                (x0.T @ y0 - xi.T @ yi) / m - cfg.dbn_l1 * np.sign(w),
                (y0 - yi).mean(axis=0),
                (x0 - xi).mean(axis=0),
            )
            for v, g, p in zip(vel, grads, (w, b_hid, c_vis)):
                v *= cfg.dbn_momentum
                v += cfg.dbn_lr * g
                p += v


def autoencoder_loss_grad(params, x, l1=0.0):
    """Fine-tuning objective and its gradient.

    ``params = (w0, b0, w1, b1)``; the loss is
    ``0.5 * mean_i ||G(F(x_i)) - x_i||^2 + l1 * (|w0|_1 + |w1|_1)``.
    """
    w0, b0, w1, b1 = params
    n = x.shape[0]
    h = _sigmoid(x @ w0 + b0)
    o = _sigmoid(h @ w1 + b1)
    diff = o - x
    loss = 0.5 * np.sum(diff * diff) / n + l1 * (np.abs(w0).sum() + np.abs(w1).sum())
    dz2 = diff * o * (1.0 - o) / n
    dz1 = (dz2 @ w1.T) * h * (1.0 - h)
    grads = (
        x.T @ dz1 + l1 * np.sign(w0),
        dz1.sum(axis=0),
        h.T @ dz2 + l1 * np.sign(w1),
        dz2.sum(axis=0),
    )
    return loss, grads


def fit_dbn(x, cfg):
    x = _as_data(x, min_rows=2)
    n, d = x.shape
    cfg.validate(d)
    r = cfg.r
    tol = cfg.tol if cfg.tol is not None else 1e-5
    max_epochs = cfg.max_iter if cfg.max_iter is not None else 200
    if cfg.dbn_batch < 1:
        raise InvalidInput("dbn_batch must be >= 1")

    lo = x.min(axis=0)
    hi = x.max(axis=0)
    hi = np.where(hi > lo, hi, lo + 1.0)
    xs = (x - lo) / (hi - lo)

    rng = np.random.default_rng(cfg.seed)
    bound = 1.0 / np.sqrt(d)
    w0 = rng.uniform(-bound, bound, (d, r))
    w1 = rng.uniform(-bound, bound, (r, d))
    b0, c0 = np.zeros(r), np.zeros(d)
    b1, c1 = np.zeros(d), np.zeros(r)

    _rbm_cd(xs, w0, b0, c0, cfg, rng)
    codes = _sigmoid(xs @ w0 + b0)
    # decoder RBM: visible = codes, hidden = bands
    _rbm_cd(codes, w1, b1, c1, cfg, rng)

    params = [w0, b0, w1, b1]
    loss0, _ = autoencoder_loss_grad(params, xs, cfg.dbn_l1)
    history = [loss0]
    best = (loss0, [p.copy() for p in params])
    vel = [np.zeros_like(p) for p in params]
    converged = False
    for epoch in range(1, max_epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, cfg.dbn_batch):
            _, grads = autoencoder_loss_grad(params, xs[order[start:start + cfg.dbn_batch]],
                                             cfg.dbn_l1)
            for v, g, p in zip(vel, grads, params):
                v *= cfg.dbn_momentum
                v -= cfg.dbn_finetune_lr * g
                p += v
        loss, _ = autoencoder_loss_grad(params, xs, cfg.dbn_l1)
        if not np.isfinite(loss) or loss > 10.0 * loss0:
            raise NumericalFailure(f"DBN fine-tuning diverged at epoch {epoch} (loss {loss:.3e})")
        history.append(loss)
        if loss < best[0]:
            best = (loss, [p.copy() for p in params])
        if abs(history[-2] - loss) / max(history[-2], 1e-300) < tol:
            converged = True
            break
    w0, b0, w1, b1 = best[1]
    return FittedReducer("dbn", r, d, dbn_w0=w0, dbn_b0=b0, dbn_w1=w1, dbn_b1=b1,
                         scale_min=lo, scale_max=hi, seed=cfg.seed, converged=converged,
                         history=np.array(history),
                         info={"initial_loss": loss0, "final_loss": best[0]})
