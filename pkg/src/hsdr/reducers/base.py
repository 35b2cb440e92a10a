"""FittedReducer container, FitConfig, encode/decode and the model file format."""

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .. import numerics
from ..errors import FormatError, HsdrIOError, InvalidInput

METHODS = ("pca", "pca_cs", "fastica", "osp", "lpp", "vsrp", "nmf", "dbn")
LINEAR_METHODS = ("pca", "pca_cs", "fastica", "osp", "lpp", "vsrp")
CENTERING_METHODS = ("pca", "pca_cs", "fastica", "vsrp")

# matrices each method populates; everything else must stay None
_FIELDS = {
    "linear": ("linear_w",),
    "nmf": ("nmf_basis",),
    "dbn": ("dbn_w0", "dbn_b0", "dbn_w1", "dbn_b1", "scale_min", "scale_max"),
}
_ALL_ARRAYS = ("linear_w", "mean", "nmf_basis", "dbn_w0", "dbn_b0", "dbn_w1", "dbn_b1",
               "scale_min", "scale_max")


@dataclass(frozen=True)
class FitConfig:
    r: int
    seed: int = 0
    tol: float | None = None
    max_iter: int | None = None
    lpp_k: int = 5
    lpp_subsample: int | None = 2000
    ica_alpha: float = 1.0
    dbn_pretrain_epochs: int = 10
    dbn_lr: float = 0.05
    dbn_finetune_lr: float = 0.01
    dbn_momentum: float = 0.9
    dbn_l1: float = 1e-4
    dbn_chain: int = 2
    dbn_batch: int = 64
    cs_columns: int | None = None

    def validate(self, d=None, allow_zero=False):
        lo = 0 if allow_zero else 1
        if self.r < lo or (d is not None and self.r > d):
            raise InvalidInput(f"r={self.r} must satisfy {lo} <= r <= d={d}")
        if self.tol is not None and not self.tol > 0:
            raise InvalidInput("tol must be > 0")
        if self.max_iter is not None and self.max_iter < 1:
            raise InvalidInput("max_iter must be >= 1")
        if self.lpp_k < 1:
            raise InvalidInput("lpp_k must be >= 1")
        if self.dbn_chain < 1:
            raise InvalidInput("dbn_chain must be >= 1")
        if not 1.0 <= self.ica_alpha <= 2.0:
            raise InvalidInput("ica_alpha must lie in [1, 2]")
        return self

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass(frozen=True, eq=False)
class FittedReducer:
    method: str
    r: int
    d: int
    centers_data: bool = False
    linear_w: np.ndarray | None = None
    mean: np.ndarray | None = None
    nmf_basis: np.ndarray | None = None
    dbn_w0: np.ndarray | None = None
    dbn_b0: np.ndarray | None = None
    dbn_w1: np.ndarray | None = None
    dbn_b1: np.ndarray | None = None
    scale_min: np.ndarray | None = None
    scale_max: np.ndarray | None = None
    fit_seconds: float = 0.0
    seed: int = 0
    converged: bool = True
    history: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidInput(f"unknown method {self.method!r}")
        if self.centers_data != (self.method in CENTERING_METHODS):
            raise InvalidInput(f"{self.method} model: centers_data must be "
                               f"{self.method in CENTERING_METHODS}")
        kind = "linear" if self.method in LINEAR_METHODS else self.method
        wanted = set(_FIELDS[kind]) | ({"mean"} if self.centers_data else set())
        for name in _ALL_ARRAYS:
            present = getattr(self, name) is not None
            if present != (name in wanted):
                state = "missing" if name in wanted else "unexpected"
                raise InvalidInput(f"{self.method} model: {state} field {name}")
        for name in _ALL_ARRAYS:
            a = getattr(self, name)
            if a is not None:
                # one memory layout, so saved and reloaded models compute identically
                a = np.array(a, dtype=np.float64, order="C")
                a.setflags(write=False)
                object.__setattr__(self, name, a)

    @property
    def is_linear(self):
        return self.method in LINEAR_METHODS


def _check_width(x, width, what):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != width:
        raise InvalidInput(f"{what} must have {width} columns, got shape {x.shape}")
    return x


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def encode(m, x, sparse=False):
    """Map pixels (rows of ``x``) to their ``r``-dimensional codes.

    ``sparse=True`` applies a linear projection through a CSR copy of
    ``linear_w``; it exists for VSRP and gives the dense result up to
    summation order.
    """
    x = _check_width(x, m.d, "x")
    if m.is_linear:
        xc = x - m.mean if m.centers_data else x
        if sparse:
            from scipy.sparse import csr_matrix

            return np.asarray(csr_matrix(m.linear_w.T).dot(xc.T).T)
        return xc @ m.linear_w
    if m.method == "nmf":
        if m.r == 0:
            return np.zeros((x.shape[0], 0))
        return numerics.nnls_batch(m.nmf_basis, np.maximum(x, 0.0).T).T
    # dbn
    xs = (x - m.scale_min) / (m.scale_max - m.scale_min)
    return _sigmoid(xs @ m.dbn_w0 + m.dbn_b0)


def decode(m, z):
    """Reconstruct pixels from codes; the inverse map used by the reconstruction error."""
    z = _check_width(z, m.r, "z")
    if m.is_linear:
        out = z @ _pinv_cached(m)
        return out + m.mean if m.centers_data else out
    if m.method == "nmf":
        return z @ m.nmf_basis.T
    s = _sigmoid(z @ m.dbn_w1 + m.dbn_b1)
    return s * (m.scale_max - m.scale_min) + m.scale_min


def _pinv_cached(m):
    cache = m.info.get("_pinv")
    if cache is None:
        cache = numerics.pinv(m.linear_w)
        m.info["_pinv"] = cache
    return cache


# ---- model files --------------------------------------------------------------------

MODEL_MAGIC = b"HSR1"
MODEL_VERSION = 1
_MHEAD = struct.Struct("<4sH")
_MFIXED = struct.Struct("<IIdQBB")
_MAT = struct.Struct("<II")


def _pack_str(s):
    b = s.encode("utf-8")
    return struct.pack("<H", len(b)) + b


def save_model(m, path):
    """Versioned binary container: header, scalars, then named little-endian f64 matrices."""
    parts = [_MHEAD.pack(MODEL_MAGIC, MODEL_VERSION), _pack_str(m.method),
             _MFIXED.pack(m.r, m.d, m.fit_seconds, m.seed, int(m.centers_data), int(m.converged))]
    arrays = [(n, getattr(m, n)) for n in _ALL_ARRAYS if getattr(m, n) is not None]
    if m.history is not None:
        arrays.append(("history", np.asarray(m.history)))
    parts.append(struct.pack("<H", len(arrays)))
    for name, a in arrays:
        a2 = np.atleast_2d(np.asarray(a, dtype="<f8"))
        if np.asarray(a).ndim == 1:
            a2 = a2.reshape(1, -1)
        parts += [_pack_str(name), struct.pack("<B", np.asarray(a).ndim),
                  _MAT.pack(*a2.shape), a2.tobytes()]
    try:
        Path(path).write_bytes(b"".join(parts))
    except OSError as exc:
        raise HsdrIOError(path, exc.strerror or str(exc)) from exc


def load_model(path):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise HsdrIOError(path, exc.strerror or str(exc)) from exc
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise FormatError("model file truncated", offset=pos)
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    def read_str():
        (n,) = struct.unpack("<H", take(2))
        return take(n).decode("utf-8")

    magic, version = _MHEAD.unpack(take(_MHEAD.size))
    if magic != MODEL_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MODEL_MAGIC!r}", offset=0)
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model version {version}", offset=4)
    method = read_str()
    r, d, secs, seed, centers, converged = _MFIXED.unpack(take(_MFIXED.size))
    (count,) = struct.unpack("<H", take(2))
    arrays = {}
    for _ in range(count):
        name = read_str()
        (ndim,) = struct.unpack("<B", take(1))
        rows, cols = _MAT.unpack(take(_MAT.size))
        a = np.frombuffer(take(rows * cols * 8), dtype="<f8").reshape(rows, cols).astype(np.float64)
        arrays[name] = a.ravel() if ndim == 1 else a
    if pos != len(data):
        raise FormatError("trailing bytes after model payload", offset=pos)
    history = arrays.pop("history", None)
    try:
        return FittedReducer(method=method, r=r, d=d, centers_data=bool(centers),
                             fit_seconds=secs, seed=seed, converged=bool(converged),
                             history=history, **arrays)
    except (InvalidInput, TypeError) as exc:
        raise FormatError(f"inconsistent model payload: {exc}", offset=pos) from None
