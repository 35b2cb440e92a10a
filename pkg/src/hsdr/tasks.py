"""Supervised downstream tasks: SAM / ACE target detection and one-vs-rest linear SVM."""

from dataclasses import dataclass
from fractions import Fraction

import numba
import numpy as np

from . import numerics
from .errors import (
    DegenerateScores,
    InvalidInput,
    InvalidTarget,
    MissingClass,
    NumericalFailure,
)
from .hsio import LabelSet, TargetMask

ACE_RIDGE = 1e-8


def _components(z):
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 1:
        z = z[None, :]
    if z.ndim != 2:
        raise InvalidInput(f"components must be an N x r matrix, got shape {z.shape}")
    return z


def _target(z, target):
    t = np.asarray(target, dtype=np.float64).ravel()
    if t.shape[0] != z.shape[1]:
        raise InvalidInput(f"target has {t.shape[0]} entries, components have {z.shape[1]}")
    if not np.any(t):
        raise InvalidTarget("target vector has zero norm")
    return t


def _cosine(z, t):
    norms = np.linalg.norm(z, axis=1)
    num = z @ t
    out = np.zeros(z.shape[0])
    ok = norms > 0
    out[ok] = num[ok] / (norms[ok] * np.linalg.norm(t))
    return np.clip(out, -1.0, 1.0)


def target_spectrum(z, mask):
    """Mean of the in-mask rows."""
    z = _components(z)
    idx = mask.indices if isinstance(mask, TargetMask) else np.asarray(mask)
    if idx.dtype == bool:
        idx = np.flatnonzero(idx)
    if idx.size == 0:
        raise InvalidTarget("target mask is empty")
    return z[idx].mean(axis=0)


def sam_map(components, target):
    """Spectral angle mapper: cosine similarity of each row to ``target``."""
    z = _components(components)
    return _cosine(z, _target(z, target))


def scene_covariance(z):
    """Centred population covariance of the rows plus a ridge of ``1e-8 * trace / r``."""
    z = _components(z)
    zc = z - z.mean(axis=0)
    c = zc.T @ zc / z.shape[0]
    c = 0.5 * (c + c.T)
    ridge = ACE_RIDGE * np.trace(c) / c.shape[0]
    return c + ridge * np.eye(c.shape[0])


def ace_map(components, target, covariance=None):
    """Adaptive cosine estimator ``x^T C^-1 t / sqrt(x^T C^-1 x * t^T C^-1 t)``.

    ``covariance`` defaults to :func:`scene_covariance` of the components.
    The statistic is evaluated as a cosine in the whitened space
    ``L^-1 x`` with ``C = L L^T``.
    """
    z = _components(components)
    t = _target(z, target)
    c = scene_covariance(z) if covariance is None else np.asarray(covariance, dtype=np.float64)
    if c.shape != (z.shape[1], z.shape[1]):
        raise InvalidInput(f"covariance must be {z.shape[1]} x {z.shape[1]}, got {c.shape}")
    try:
        chol = numerics.cholesky(c)
    except NumericalFailure as exc:
        raise NumericalFailure(f"scene covariance is singular after ridge: {exc}") from None
    zw = numerics._solve_lower(chol, z.T).T
    tw = numerics._solve_lower(chol, t[:, None]).ravel()
    return _cosine(zw, tw)


@dataclass(frozen=True)
class DetectionResult:
    score_map: np.ndarray
    threshold: float
    f1: float
    iou: float
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int


def _truth_indicator(truth, n):
    if isinstance(truth, TargetMask):
        ind = truth.indicator(n)
    else:
        ind = np.asarray(truth)
        if ind.dtype != bool:
            ind = ind.astype(bool)
        if ind.shape != (n,):
            raise InvalidInput(f"truth indicator must have length {n}")
    positives = int(ind.sum())
    if positives == 0 or positives == n:
        raise InvalidInput("truth mask must be non-empty and not cover every pixel")
    return ind


def detection_curve(scores, truth):
    """Counts at every candidate threshold.

    Candidates are the midpoints between consecutive distinct scores plus
    one threshold below the minimum (everything positive). A pixel is
    declared positive when its score is strictly above the threshold.
    Returns ``(thresholds, tp, predicted_positive, actual_positive)``,
    thresholds ascending.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    if not np.all(np.isfinite(s)):
        raise InvalidInput("scores contain non-finite values")
    ind = _truth_indicator(truth, s.shape[0])
    uniq, inverse = np.unique(s, return_inverse=True)
    if uniq.size < 2:
        raise DegenerateScores("score map is constant; no threshold separates anything")
    below = uniq[0] - max(1.0, abs(uniq[0]))
    thresholds = np.concatenate([[below], 0.5 * (uniq[:-1] + uniq[1:])])
    # threshold j admits every pixel whose distinct-value rank is >= j
    per_val = np.bincount(inverse, minlength=uniq.size)
    per_val_tp = np.bincount(inverse, weights=ind.astype(np.float64), minlength=uniq.size)
    predicted = np.cumsum(per_val[::-1])[::-1]
    tp = np.rint(np.cumsum(per_val_tp[::-1])[::-1]).astype(np.int64)
    return thresholds, tp, predicted.astype(np.int64), int(ind.sum())


def sweep_threshold(scores, truth):
    """F1-maximising threshold over the exact sweep; ties go to the higher threshold."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    thresholds, tp, pred, actual = detection_curve(s, truth)
    f1 = 2.0 * tp / (pred + actual)
    best = np.flatnonzero(f1 == f1.max())[-1]
    t, p = int(tp[best]), int(pred[best])
    fp, fn = p - t, actual - t
    return DetectionResult(
        score_map=s,
        threshold=float(thresholds[best]),
        f1=float(f1[best]),
        iou=t / (t + fp + fn),
        precision=t / p if p else 0.0,
        recall=t / actual,
        tp=t, fp=fp, fn=fn,
    )


@dataclass(frozen=True)
class SvmConfig:
    lam: float = 1e-4
    epochs: int = 20
    seed: int = 0


@dataclass(frozen=True)
class SvmModel:
    """Per-class weights (classes x r) and offsets; the decision is ``w_c . x - b_c``."""

    weights: np.ndarray
    offsets: np.ndarray
    class_count: int
    seed: int = 0
    epochs: int = 0
    lam: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.offsets, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[0],) or w.shape[0] != self.class_count:
            raise InvalidInput("weights / offsets / class_count disagree")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise NumericalFailure("SVM weights are not finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "offsets", b)


def _resolve_labels(z, labels, n_classes):
    if isinstance(labels, LabelSet):
        labels.check_pixels(z.shape[0])
        return z[labels.pixel_index], labels.class_id, labels.n_classes
    y = np.asarray(labels, dtype=np.int64).ravel()
    if y.shape[0] != z.shape[0]:
        raise InvalidInput(f"{y.shape[0]} labels for {z.shape[0]} rows")
    if y.size and y.min() < 0:
        raise InvalidInput("negative class id")
    return z, y, n_classes if n_classes is not None else (int(y.max()) + 1 if y.size else 0)


def hinge_objective(w_aug, xa, sign, lam):
    """``lam/2 |w|^2 + mean(max(0, 1 - y w.x))`` for each row of ``w_aug``."""
    margins = sign * (xa @ w_aug.T)
    return 0.5 * lam * np.sum(w_aug**2, axis=1) + np.maximum(0.0, 1.0 - margins).mean(axis=0)


@numba.njit(cache=True)
def _pegasos_epoch(w, xa, sign, order, lam, radius, t):
    n_cls, p = w.shape
    for i in order:
        t += 1
        eta = 1.0 / (lam * t)
        shrink = 1.0 - eta * lam
        for c in range(n_cls):
            margin = 0.0
            for j in range(p):
                margin += w[c, j] * xa[i, j]
            margin *= sign[i, c]
            sq = 0.0
            for j in range(p):
                w[c, j] *= shrink
                if margin < 1.0:
                    w[c, j] += eta * sign[i, c] * xa[i, j]
                sq += w[c, j] * w[c, j]
            norm = np.sqrt(sq)
            if norm > radius:
                for j in range(p):
                    w[c, j] *= radius / norm
    return t


def svm_train_ovr(z, labels, cfg=None, n_classes=None):
    """One-vs-rest hinge-loss SVMs by Pegasos stochastic subgradient steps.

    All class problems share the per-epoch seeded shuffle and step sizes
    ``1 / (lam t)``, with the iterate projected onto the ball of radius
    ``1/sqrt(lam)``. The bias enters as an extra constant feature. For each
    class the epoch-end iterate (or zero) with the lowest regularised
    objective is kept. ``cfg`` defaults to ``SvmConfig()``.
    """
    cfg = SvmConfig() if cfg is None else cfg
    z = _components(z)
    x, y, n_cls = _resolve_labels(z, labels, n_classes)
    if n_cls < 2:
        raise InvalidInput("need at least 2 classes")
    present = np.unique(y)
    missing = sorted(set(range(n_cls)) - set(present.tolist()))
    if missing:
        raise MissingClass(missing)
    if cfg.lam <= 0 or cfg.epochs < 1:
        raise InvalidInput("lam must be > 0 and epochs >= 1")
    n, r = x.shape
    xa = np.hstack([x, np.ones((n, 1))])
    sign = np.where(y[:, None] == np.arange(n_cls)[None, :], 1.0, -1.0)
    w = np.zeros((n_cls, r + 1))
    radius = 1.0 / np.sqrt(cfg.lam)
    best_w = np.zeros_like(w)
    best_obj = hinge_objective(best_w, xa, sign, cfg.lam)
    rng = np.random.default_rng(cfg.seed)
    t = 0
    for _ in range(cfg.epochs):
        t = _pegasos_epoch(w, xa, sign, rng.permutation(n), cfg.lam, radius, t)
        obj = hinge_objective(w, xa, sign, cfg.lam)
        better = obj < best_obj
        best_w[better] = w[better]
        best_obj = np.where(better, obj, best_obj)
    return SvmModel(best_w[:, :r].copy(), -best_w[:, r].copy(), n_cls, seed=cfg.seed,
                    epochs=cfg.epochs, lam=cfg.lam)


def svm_decision(m, z):
    z = _components(z)
    if z.shape[1] != m.weights.shape[1]:
        raise InvalidInput(f"z has {z.shape[1]} columns, model expects {m.weights.shape[1]}")
    return z @ m.weights.T - m.offsets


def svm_predict(m, z):
    """Class with the largest decision value; ties resolve to the lowest id."""
    return np.argmax(svm_decision(m, z), axis=1)


@dataclass(frozen=True)
class AccuracyReport:
    overall: float
    average: float
    confusion: np.ndarray


def accuracy_metrics(predicted, truth, n_classes=None):
    """Overall accuracy, average per-class recall and the confusion matrix.

    ``confusion[i, j]`` counts pixels of true class ``i`` predicted as ``j``.
    Both accuracies are computed in exact rational arithmetic before
    rounding, so balanced supports give ``average == overall`` exactly.
    Classes with no support are left out of the average.
    """
    pred = np.asarray(predicted, dtype=np.int64).ravel()
    true = truth.class_id if isinstance(truth, LabelSet) else np.asarray(truth, dtype=np.int64).ravel()
    if isinstance(truth, LabelSet) and n_classes is None:
        n_classes = truth.n_classes
    if pred.shape != true.shape:
        raise InvalidInput(f"length mismatch: {pred.shape[0]} vs {true.shape[0]}")
    if pred.size == 0:
        raise InvalidInput("empty prediction set")
    k = max(int(pred.max()), int(true.max())) + 1
    if n_classes is not None:
        k = max(k, n_classes)
    conf = np.zeros((k, k), dtype=np.int64)
    np.add.at(conf, (true, pred), 1)
    support = conf.sum(axis=1)
    overall = Fraction(int(np.trace(conf)), int(pred.size))
    recalls = [Fraction(int(conf[i, i]), int(support[i])) for i in range(k) if support[i] > 0]
    average = sum(recalls, Fraction(0)) / len(recalls)
    return AccuracyReport(float(overall), float(average), conf)
