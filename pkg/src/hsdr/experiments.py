"""Experiment orchestration: one function per CLI command, each filling an EvalReport."""

import datetime as _dt
import warnings

import numpy as np

from . import hsio
from .errors import ConfigError, DegenerateData
from .metrics import atpv, band_atpv, mi_matrix, relative_error, time_fit
from .reducers import CENTERING_METHODS, decode, encode, fit, load_model, save_model
from .report import EvalReport
from .tasks import (
    SvmConfig,
    accuracy_metrics,
    ace_map,
    sam_map,
    svm_predict,
    svm_train_ovr,
    sweep_threshold,
    target_spectrum,
)

DEFAULT_R = (1, 2, 5, 10, 25)
MI_SAMPLE = 43120


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


# ---- data ---------------------------------------------------------------------------

def load_inputs(cfg):
    """Cube, labels and target mask named by the config, or an inline synthetic scene.

    Returns ``(cube, labels, mask)``; labels / mask are None when absent.
    """
    if cfg.get("input"):
        cube = hsio.load_cube(cfg.get("input"))
        labels = hsio.load_labels(cfg.get("labels")) if cfg.get("labels") else None
        mask = hsio.load_mask(cfg.get("mask")) if cfg.get("mask") else None
        if labels is not None:
            labels.check_pixels(cube.n_pixels)
        return cube, labels, mask
    spec = cfg.scene_spec()
    cube, labels, _, _ = hsio.generate_scene(spec)
    mask = None
    if spec.target_radius > 0:
        mask = hsio.target_mask_from_labels(labels, labels.n_classes - 1)
    if cfg.get("labels"):
        labels = hsio.load_labels(cfg.get("labels"))
    if cfg.get("mask"):
        mask = hsio.load_mask(cfg.get("mask"))
    return cube, labels, mask


def _r_values(cfg, d, default=DEFAULT_R):
    rs = cfg.get("r") or [r for r in default if r <= d]
    bad = [r for r in rs if r > d]
    if bad:
        raise ConfigError(f"config field 'r': values {bad} exceed the band count {d}")
    return rs


def _fit_sample(cfg, x):
    n = cfg.get("fit_pixels")
    if n is None or n >= x.shape[0]:
        return x
    return x[hsio.sample_indices(x.shape[0], n, cfg.seed)]


def _fit(cfg, method, x, r):
    return fit(method, x, cfg.fit_config(method, r))


def _codes(cfg, method, x, r):
    m = _fit(cfg, method, _fit_sample(cfg, x), r)
    return m, encode(m, x)


# ---- commands -----------------------------------------------------------------------

def run_synth(cfg, out):
    if out is None:
        raise ConfigError("synth needs an output path (--out or 'output')")
    spec = cfg.scene_spec()
    cube, labels, _, _ = hsio.generate_scene(spec)
    hsio.save_cube(cube, out)
    hsio.save_labels(labels, f"{out}.labels.csv")
    rep = EvalReport("synth", cfg.echo())
    if spec.target_radius > 0:
        mask = hsio.target_mask_from_labels(labels, labels.n_classes - 1)
        hsio.save_mask(mask, f"{out}.mask.csv")
        rep.add("scene", "target_pixels", mask.indices.size)
    rep.add("scene", "n_pixels", cube.n_pixels)
    rep.add("scene", "bands", cube.bands)
    return rep


def _single_method(cfg):
    ms = cfg.methods if (cfg.get("methods") or cfg.get("method")) else []
    if len(ms) != 1:
        raise ConfigError("config field 'method' must name exactly one method")
    return ms[0]


def run_fit(cfg, out):
    if out is None:
        raise ConfigError("fit needs an output path (--out or 'output') for the model")
    cube, _, _ = load_inputs(cfg)
    x = cube.pixels()
    method = _single_method(cfg)
    r = _r_values(cfg, cube.bands, default=(min(10, cube.bands),))[0]
    m = _fit(cfg, method, _fit_sample(cfg, x), r)
    save_model(m, out)
    rep = EvalReport("fit", cfg.echo())
    rep.add(method, "E_R", relative_error(x, decode(m, encode(m, x))), r=r, n_pixels=x.shape[0])
    rep.add(method, "fit_seconds", m.fit_seconds, r=r)
    return rep


def run_transform(cfg, out):
    if out is None:
        raise ConfigError("transform needs an output path (--out or 'output')")
    model = load_model(cfg.require("model"))
    cube, _, _ = load_inputs(cfg)
    if cube.bands != model.d:
        raise ConfigError(f"model expects {model.d} bands, input has {cube.bands}")
    z = encode(model, cube.pixels())
    hsio.save_cube(hsio.HsiCube.from_pixels(z, cube.lines, cube.samples), out)
    rep = EvalReport("transform", cfg.echo())
    rep.add(model.method, "components", model.r, r=model.r, n_pixels=cube.n_pixels)
    return rep


def _baseline_error(x, method):
    # r = 0: centred methods reconstruct the mean, the rest reconstruct zero
    base = np.broadcast_to(x.mean(axis=0), x.shape) if method in CENTERING_METHODS else np.zeros_like(x)
    return relative_error(x, base)


def run_reconstruct(cfg, out=None):
    cube, _, _ = load_inputs(cfg)
    x = cube.pixels()
    rs = _r_values(cfg, cube.bands)
    rep = EvalReport("reconstruct", cfg.echo())
    ns = cfg.get("n")
    for method in cfg.methods:
        for n in (ns or [None]):
            if n is None:
                xs = _fit_sample(cfg, x)
            else:
                if n > x.shape[0]:
                    raise ConfigError(f"config field 'n': {n} exceeds the pixel count {x.shape[0]}")
                xs = x[hsio.sample_indices(x.shape[0], n, cfg.seed)]
            for r in rs:
                if r == 0:
                    err = _baseline_error(x, method)
                else:
                    m = _fit(cfg, method, xs, r)
                    err = relative_error(x, decode(m, encode(m, x)))
                rep.add(method, "E_R", err, r=r, n_pixels=xs.shape[0])
    return rep


def run_eval_mi(cfg, out=None):
    cube, _, _ = load_inputs(cfg)
    x = cube.pixels()
    r = min(cfg.get("mi_components", 25), cube.bands)
    if r < 2:
        raise ConfigError("config field 'mi_components' must be >= 2")
    k = cfg.get("mi_k", 3)
    sample = min(cfg.get("mi_sample", MI_SAMPLE), x.shape[0])
    rep = EvalReport("eval-mi", cfg.echo())
    for method in cfg.methods:
        _, z = _codes(cfg, method, x, r)
        mi = mi_matrix(z, k=k, sample_size=sample, seed=cfg.seed)
        iu = np.triu_indices(r, 1)
        for i, j in zip(*iu):
            rep.add(method, "mi", mi.values[i, j], r=r, n_pixels=sample, component=i, component2=j)
        rep.add(method, "mi_mean", mi.values[iu].mean(), r=r, n_pixels=sample)
    return rep


def _safe_atpv(img):
    try:
        return atpv(img)
    except DegenerateData:
        return float("nan")


def run_eval_atpv(cfg, out=None):
    cube, _, _ = load_inputs(cfg)
    x = cube.pixels()
    r = min(cfg.get("atpv_components", 25), cube.bands)
    rep = EvalReport("eval-atpv", cfg.echo())
    per_band, median = band_atpv(cube, "median")
    for j, v in enumerate(per_band):
        rep.add("bands", "atpv", v, component=j)
    rep.add("bands", "atpv_baseline_median", median)
    rep.add("bands", "atpv_baseline_mean", float(np.nanmean(per_band)))
    for method in cfg.methods:
        _, z = _codes(cfg, method, x, r)
        img = z.reshape(cube.lines, cube.samples, r)
        for i in range(r):
            rep.add(method, "atpv", _safe_atpv(img[:, :, i]), r=r, component=i)
    return rep


def _detect_rows(rep, method, z, mask, detectors, r):
    zs = hsio.standardize(z)
    target = target_spectrum(zs, mask)
    for det in detectors:
        scores = sam_map(zs, target) if det == "sam" else ace_map(zs, target)
        res = sweep_threshold(scores, mask)
        for name in ("f1", "iou", "precision", "recall", "threshold"):
            rep.add(method, name, getattr(res, name), detector=det, r=r)


def run_detect(cfg, out=None):
    cube, _, mask = load_inputs(cfg)
    if mask is None:
        raise ConfigError("missing required config field 'mask' for detect")
    mask.indicator(cube.n_pixels)
    x = cube.pixels()
    rs = [r for r in _r_values(cfg, cube.bands) if r > 0]
    detectors = cfg.get("detectors") or ["sam", "ace"]
    rep = EvalReport("detect", cfg.echo())
    _detect_rows(rep, "raw", x, mask, detectors, cube.bands)
    for method in cfg.methods:
        for r in rs:
            _, z = _codes(cfg, method, x, r)
            _detect_rows(rep, method, z, mask, detectors, r)
    return rep


def classification_split(pool, train_n, eval_n, seed):
    """Disjoint seeded train / evaluation subsets of the labelled pixel indices in ``pool``."""
    pool = np.asarray(pool, dtype=np.int64)
    if train_n >= pool.size:
        raise ConfigError(f"train_pixels={train_n} leaves no evaluation pixels out of {pool.size}")
    order = hsio.sample_indices(pool.size, pool.size, seed)
    train = pool[order[:train_n]]
    rest = pool[order[train_n:]]
    if eval_n is not None:
        rest = rest[:eval_n]
    return np.sort(train), np.sort(rest)


def run_classify(cfg, out=None):
    cube, labels, _ = load_inputs(cfg)
    if labels is None:
        raise ConfigError("missing required config field 'labels' for classify")
    x = cube.pixels()
    dense = labels.dense(cube.n_pixels)
    keep = dense >= 0
    if cfg.get("exclude_saturated", False):
        level = cfg.scene.get("saturation") if not cfg.get("input") else None
        level = level if level is not None else float(x.max())
        keep &= ~hsio.saturated_pixels(cube, level)
    pool = np.flatnonzero(keep)
    train_n = cfg.get("train_pixels", 10_000)
    train, test = classification_split(pool, min(train_n, pool.size - 1), cfg.get("eval_pixels"),
                                       cfg.seed)
    rs = [r for r in _r_values(cfg, cube.bands) if r > 0]
    svm_cfg = SvmConfig(seed=cfg.seed)
    rep = EvalReport("classify", cfg.echo())

    def score(method, z, r):
        zs = hsio.standardize(z)
        model = svm_train_ovr(zs[train], dense[train], svm_cfg, n_classes=labels.n_classes)
        acc = accuracy_metrics(svm_predict(model, zs[test]), dense[test], labels.n_classes)
        rep.add(method, "OA", acc.overall, r=r, n_pixels=train.size)
        rep.add(method, "AA", acc.average, r=r, n_pixels=train.size)

    score("raw", x, cube.bands)
    for method in cfg.methods:
        for r in rs:
            _, z = _codes(cfg, method, x, r)
            score(method, z, r)
    return rep


def run_bench(cfg, out=None):
    cube, _, _ = load_inputs(cfg)
    x = cube.pixels()
    ns = cfg.require("n")
    rs = [r for r in _r_values(cfg, cube.bands, default=(min(12, cube.bands),)) if r > 0]
    repeats = cfg.get("repeats", 3)
    rep = EvalReport("bench", cfg.echo())
    for method in cfg.methods:
        for r in rs:
            for n in ns:
                if n > x.shape[0]:
                    raise ConfigError(f"config field 'n': {n} exceeds the pixel count {x.shape[0]}")
                xs = x[hsio.sample_indices(x.shape[0], n, cfg.seed)]
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    rec = time_fit(method, xs, cfg.fit_config(method, r), repeats)
                for i, t in enumerate(rec.run_durations):
                    rep.add(method, "run_seconds", t, r=r, n_pixels=n, trial=i)
                rep.add(method, "median_seconds", rec.median_seconds, r=r, n_pixels=n)
    return rep


RUNNERS = {
    "synth": run_synth,
    "fit": run_fit,
    "transform": run_transform,
    "reconstruct": run_reconstruct,
    "eval-mi": run_eval_mi,
    "eval-atpv": run_eval_atpv,
    "detect": run_detect,
    "classify": run_classify,
    "bench": run_bench,
}


def run(cfg, out=None):
    """Execute the experiment named by ``cfg.command`` and return its report."""
    started = _now()
    rep = RUNNERS[cfg.command](cfg, out)
    rep.timestamps = {"started": started, "finished": _now()}
    return rep
