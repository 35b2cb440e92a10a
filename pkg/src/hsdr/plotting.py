"""Figures for experiment reports, rendered off-screen to PNG files."""

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

plt.rcParams["figure.figsize"] = (6.0, 4.0)
plt.rcParams["figure.dpi"] = 100
plt.rcParams["savefig.bbox"] = "tight"
plt.rcParams["axes.grid"] = True
plt.rcParams["grid.alpha"] = 0.3


def _series(rows, x_key, metric, **where):
    """{method: (xs, ys)} for rows matching ``metric`` and ``where``, sorted by x."""
    acc = defaultdict(list)
    for row in rows:
        if row["metric"] != metric or row[x_key] is None:
            continue
        if any(row.get(k) != v for k, v in where.items()):
            continue
        acc[row["method"]].append((row[x_key], row["value"]))
    out = {}
    for m, pts in acc.items():
        pts.sort()
        out[m] = (np.array([p[0] for p in pts]), np.array([p[1] for p in pts]))
    return out


def _line_plot(series, xlabel, ylabel, title, path, logx=False, logy=False, hline=None):
    fig, ax = plt.subplots()
    for m, (xs, ys) in sorted(series.items()):
        ax.plot(xs, ys, marker="o", ms=3, label=m)
    if hline is not None:
        ax.axhline(hline[1], color="0.5", ls="--", lw=1, label=hline[0])
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if series:
        ax.legend(fontsize=8)
    fig.savefig(path)
    plt.close(fig)
    return path


def _reconstruct(rep, base):
    out = []
    ns = sorted({r["n_pixels"] for r in rep.rows if r["metric"] == "E_R"})
    rs = sorted({r["r"] for r in rep.rows if r["metric"] == "E_R"})
    if len(ns) == 1:
        s = _series(rep.rows, "r", "E_R")
        out.append(_line_plot(s, "components r", "E_R", "reconstruction error",
                              f"{base}_er_vs_r.png", logy=True))
    else:
        r_sel = rs[-1]
        s = _series(rep.rows, "n_pixels", "E_R", r=r_sel)
        out.append(_line_plot(s, "training pixels", "E_R", f"reconstruction error, r = {r_sel}",
                              f"{base}_er_vs_n.png", logx=True))
    return out


def _mi(rep, base):
    out = []
    methods = sorted({r["method"] for r in rep.rows if r["metric"] == "mi"})
    for m in methods:
        rows = [r for r in rep.rows if r["method"] == m and r["metric"] == "mi"]
        k = max(max(r["component"], r["component2"]) for r in rows) + 1
        mat = np.zeros((k, k))
        for r in rows:
            mat[r["component"], r["component2"]] = mat[r["component2"], r["component"]] = r["value"]
        fig, ax = plt.subplots(figsize=(4.5, 4.0))
        im = ax.imshow(mat, cmap="viridis", origin="upper")
        ax.set_title(f"{m}: pairwise MI (nats)")
        ax.set_xlabel("component")
        ax.set_ylabel("component")
        ax.grid(False)
        fig.colorbar(im, ax=ax)
        path = f"{base}_mi_{m}.png"
        fig.savefig(path)
        plt.close(fig)
        out.append(path)
    return out


def _atpv(rep, base):
    s = _series([r for r in rep.rows if r["method"] != "bands"], "component", "atpv")
    med = rep.select(method="bands", metric="atpv_baseline_median")
    hline = ("band median", med[0]["value"]) if med else None
    return [_line_plot(s, "component", "ATPV", "across-track proportion of variance",
                       f"{base}_atpv.png", hline=hline)]


def _detect(rep, base):
    out = []
    for det in sorted({r["detector"] for r in rep.rows if r["detector"]}):
        s = _series([r for r in rep.rows if r["method"] != "raw"], "r", "f1", detector=det)
        raw = rep.select(method="raw", metric="f1", detector=det)
        hline = ("all bands", raw[0]["value"]) if raw else None
        out.append(_line_plot(s, "components r", "F1", f"{det.upper()} detection",
                              f"{base}_f1_{det}.png", hline=hline))
    return out


def _classify(rep, base):
    out = []
    for metric in ("OA", "AA"):
        s = _series([r for r in rep.rows if r["method"] != "raw"], "r", metric)
        raw = rep.select(method="raw", metric=metric)
        hline = ("all bands", raw[0]["value"]) if raw else None
        out.append(_line_plot(s, "components r", metric, f"SVM {metric}",
                              f"{base}_{metric.lower()}.png", hline=hline))
    return out


def _bench(rep, base):
    out = []
    for r_sel in sorted({r["r"] for r in rep.rows if r["metric"] == "median_seconds"}):
        s = _series(rep.rows, "n_pixels", "median_seconds", r=r_sel)
        out.append(_line_plot(s, "pixels N", "median fit time (s)", f"fit time, r = {r_sel}",
                              f"{base}_time_r{r_sel}.png", logx=True, logy=True))
    return out


_RENDERERS = {
    "reconstruct": _reconstruct,
    "eval-mi": _mi,
    "eval-atpv": _atpv,
    "detect": _detect,
    "classify": _classify,
    "bench": _bench,
}


def render(report, out_path):
    """Write the figures for ``report`` next to ``out_path``; returns the file paths."""
    fn = _RENDERERS.get(report.command)
    if fn is None or not report.rows:
        return []
    p = Path(out_path)
    base = str(p.with_suffix("")) if p.suffix else str(p)
    return fn(report, base)
