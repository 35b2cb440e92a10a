"""Hyperspectral cube model, HSC1 file format, synthetic scenes and pixel sampling."""

import csv
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import FormatError, HsdrIOError, InvalidInput, InvalidSpec

__all__ = [
    "HsiCube",
    "LabelSet",
    "SceneSpec",
    "TargetMask",
    "generate_scene",
    "load_cube",
    "load_labels",
    "load_mask",
    "sample_indices",
    "sample_pixels",
    "saturated_pixels",
    "save_cube",
    "save_labels",
    "save_mask",
    "smile_shifts",
    "standardize",
    "stripe_gains",
]

MAGIC = b"HSC1"
_HEADER = struct.Struct("<4sHIII")
_VERSION_F32 = 1
_VERSION_F64 = 2
_DTYPES = {_VERSION_F32: np.dtype("<f4"), _VERSION_F64: np.dtype("<f8")}
MAX_VALUES = 1 << 36


@dataclass(frozen=True, eq=False)
class HsiCube:
    """Image of shape (lines, samples, bands); lines run along-track."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise InvalidInput(f"cube values must be 3-D, got shape {v.shape}")
        if v.shape[2] < 1:
            raise InvalidInput("cube needs at least one band")
        if not np.all(np.isfinite(v)):
            raise InvalidInput("cube contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def lines(self):
        return self.values.shape[0]

    @property
    def samples(self):
        return self.values.shape[1]

    @property
    def bands(self):
        return self.values.shape[2]

    @property
    def n_pixels(self):
        return self.lines * self.samples

    def pixels(self):
        """The ``N x d`` pixel matrix in BIP (line-major) order."""
        return self.values.reshape(-1, self.bands)

    @classmethod
    def from_pixels(cls, pixels, lines, samples):
        pixels = np.asarray(pixels, dtype=np.float64)
        return cls(pixels.reshape(lines, samples, pixels.shape[1]))

    def __eq__(self, other):
        if not isinstance(other, HsiCube):
            return NotImplemented
        return self.values.shape == other.values.shape and np.array_equal(self.values, other.values)

    __hash__ = None


def save_cube(cube, path, precision="auto"):
    """Write ``cube`` as HSC1.

    ``precision`` is ``"f32"`` (version 1), ``"f64"`` (version 2) or ``"auto"``,
    which picks f32 whenever every value survives the cast unchanged so a
    reload is always bit-exact.
    """
    if precision == "auto":
        as32 = cube.values.astype(np.float32)
        precision = "f32" if np.array_equal(as32.astype(np.float64), cube.values) else "f64"
    if precision not in ("f32", "f64"):
        raise InvalidInput(f"unknown precision {precision!r}")
    version = _VERSION_F32 if precision == "f32" else _VERSION_F64
    header = _HEADER.pack(MAGIC, version, cube.lines, cube.samples, cube.bands)
    payload = np.ascontiguousarray(cube.values, dtype=_DTYPES[version]).tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    except OSError as exc:
        raise HsdrIOError(path, exc.strerror or str(exc)) from exc


def load_cube(path):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise HsdrIOError(path, exc.strerror or str(exc)) from exc
    return parse_cube(data)


def parse_cube(data):
    if len(data) < 4 or data[:4] != MAGIC:
        raise FormatError(f"bad magic {bytes(data[:4])!r}, expected {MAGIC!r}", offset=0)
    if len(data) < _HEADER.size:
        raise FormatError("truncated header", offset=len(data))
    _, version, lines, samples, bands = _HEADER.unpack_from(data, 0)
    if version not in _DTYPES:
        raise FormatError(f"unsupported version {version}", offset=4)
    if bands == 0:
        raise FormatError("cube declares zero bands", offset=14)
    count = lines * samples * bands
    if count > MAX_VALUES:
        raise FormatError(f"declared size {lines}x{samples}x{bands} overflows the reader limit", offset=6)
    dtype = _DTYPES[version]
    pixel_bytes = bands * dtype.itemsize
    expected = _HEADER.size + count * dtype.itemsize
    if len(data) < expected:
        present = (len(data) - _HEADER.size) // pixel_bytes
        raise FormatError(
            f"payload truncated: {lines * samples} pixels declared, {present} complete",
            offset=_HEADER.size + present * pixel_bytes,
        )
    if len(data) > expected:
        raise FormatError(f"{len(data) - expected} trailing bytes after payload", offset=expected)
    values = np.frombuffer(data, dtype=dtype, count=count, offset=_HEADER.size)
    values = values.astype(np.float64).reshape(lines, samples, bands)
    try:
        return HsiCube(values)
    except InvalidInput as exc:
        raise FormatError(str(exc), offset=_HEADER.size) from None


@dataclass(frozen=True)
class SceneSpec:
    """Parameters of the synthetic linear-mixing scene.

    ``target_radius`` > 0 reserves the last endmember for a single disk-shaped
    region (a detection target) centred in the scene. ``sharpness`` scales the
    abundance fields before the softmax; large values give near-pure regions.
    ``pure`` replaces the softmax by one-hot abundances.
    """

    lines: int = 100
    samples: int = 100
    bands: int = 116
    endmember_count: int = 6
    abundance_smoothness: float = 6.0
    noise_sigma: float = 0.005
    stripe_sigma: float = 0.0
    smile_amplitude: float = 0.0
    seed: int = 0
    sharpness: float = 3.0
    pure: bool = False
    target_radius: float = 0.0
    saturation: float | None = None

    def validate(self):
        if min(self.lines, self.samples, self.bands, self.endmember_count) < 1:
            raise InvalidSpec("lines, samples, bands and endmember_count must be >= 1")
        if self.endmember_count > self.bands:
            raise InvalidSpec(
                f"endmember_count={self.endmember_count} exceeds bands={self.bands}"
            )
        if self.target_radius > 0 and self.endmember_count < 2:
            raise InvalidSpec("a target region needs endmember_count >= 2")
        for name in ("noise_sigma", "stripe_sigma", "smile_amplitude", "abundance_smoothness"):
            if getattr(self, name) < 0:
                raise InvalidSpec(f"{name} must be >= 0")
        return self

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class LabelSet:
    pixel_index: np.ndarray
    class_id: np.ndarray
    class_names: tuple = ()

    def __post_init__(self):
        idx = np.asarray(self.pixel_index, dtype=np.int64)
        cid = np.asarray(self.class_id, dtype=np.int64)
        if idx.shape != cid.shape or idx.ndim != 1:
            raise InvalidInput("pixel_index and class_id must be 1-D of equal length")
        if idx.size and (idx.min() < 0 or cid.min() < 0):
            raise InvalidInput("negative pixel index or class id")
        names = tuple(self.class_names)
        if not names:
            n = int(cid.max()) + 1 if cid.size else 0
            names = tuple(f"class_{i}" for i in range(n))
        if cid.size and cid.max() >= len(names):
            raise InvalidInput(f"class id {cid.max()} out of range for {len(names)} classes")
        object.__setattr__(self, "pixel_index", idx)
        object.__setattr__(self, "class_id", cid)
        object.__setattr__(self, "class_names", names)

    @property
    def n_classes(self):
        return len(self.class_names)

    def check_pixels(self, n_pixels):
        if self.pixel_index.size and self.pixel_index.max() >= n_pixels:
            raise InvalidInput(f"label index {self.pixel_index.max()} >= pixel count {n_pixels}")
        return self

    def dense(self, n_pixels, fill=-1):
        self.check_pixels(n_pixels)
        out = np.full(n_pixels, fill, dtype=np.int64)
        out[self.pixel_index] = self.class_id
        return out


@dataclass(frozen=True)
class TargetMask:
    indices: np.ndarray

    def __post_init__(self):
        idx = np.unique(np.asarray(self.indices, dtype=np.int64))
        if idx.size and idx[0] < 0:
            raise InvalidInput("negative pixel index in target mask")
        object.__setattr__(self, "indices", idx)

    def indicator(self, n_pixels):
        if self.indices.size and self.indices[-1] >= n_pixels:
            raise InvalidInput(f"target index {self.indices[-1]} >= pixel count {n_pixels}")
        out = np.zeros(n_pixels, dtype=bool)
        out[self.indices] = True
        return out


def _streams(seed):
    names = ("endmembers", "abundances", "noise", "stripes", "target")
    kids = np.random.SeedSequence(int(seed)).spawn(len(names))
    return {n: np.random.default_rng(k) for n, k in zip(names, kids)}


def _endmember_spectra(rng, count, bands):
    axis = np.arange(bands, dtype=np.float64)
    out = np.empty((count, bands))
    for i in range(count):
        spec = np.zeros(bands)
        for _ in range(rng.integers(3, 6)):
            centre = rng.uniform(-0.1 * bands, 1.1 * bands)
            width = rng.uniform(bands / 20.0, bands / 4.0)
            spec += rng.uniform(0.15, 0.8) * np.exp(-0.5 * ((axis - centre) / width) ** 2)
        out[i] = np.clip(spec, 0.01, 1.0)
    return out


def _abundances(spec, rng):
    L, S = spec.lines, spec.samples
    n_bg = spec.endmember_count - (1 if spec.target_radius > 0 else 0)
    fields = np.empty((L, S, n_bg))
    for i in range(n_bg):
        f = gaussian_filter(rng.standard_normal((L, S)), spec.abundance_smoothness, mode="wrap")
        sd = f.std()
        fields[..., i] = (f - f.mean()) / (sd if sd > 0 else 1.0)
    if spec.pure:
        ab = np.zeros_like(fields)
        np.put_along_axis(ab, fields.argmax(axis=2)[..., None], 1.0, axis=2)
    else:
        z = spec.sharpness * fields
        z -= z.max(axis=2, keepdims=True)
        ab = np.exp(z)
        ab /= ab.sum(axis=2, keepdims=True)
    if spec.target_radius > 0:
        full = np.zeros((L, S, spec.endmember_count))
        full[..., :n_bg] = ab
        yy, xx = np.mgrid[0:L, 0:S]
        inside = (yy - (L - 1) / 2.0) ** 2 + (xx - (S - 1) / 2.0) ** 2 <= spec.target_radius**2
        full[inside] = 0.0
        full[inside, -1] = 1.0
        ab = full
    return ab.reshape(L * S, spec.endmember_count)


def stripe_gains(spec):
    """Per across-track column multiplicative gain injected by ``generate_scene``."""
    spec.validate()
    if spec.stripe_sigma == 0:
        return np.ones(spec.samples)
    rng = _streams(spec.seed)["stripes"]
    return 1.0 + spec.stripe_sigma * rng.standard_normal(spec.samples)


def smile_shifts(spec):
    """Band-index shift per across-track column: quadratic, ``smile_amplitude`` at the edges."""
    if spec.samples == 1 or spec.smile_amplitude == 0:
        return np.zeros(spec.samples)
    centre = (spec.samples - 1) / 2.0
    return spec.smile_amplitude * ((np.arange(spec.samples) - centre) / centre) ** 2


def _apply_smile(values, shifts):
    bands = values.shape[2]
    axis = np.arange(bands, dtype=np.float64)
    out = values.copy()
    for s, shift in enumerate(shifts):
        if shift == 0:
            continue
        pos = np.clip(axis + shift, 0.0, bands - 1.0)
        lo = np.floor(pos).astype(np.intp)
        hi = np.minimum(lo + 1, bands - 1)
        frac = pos - lo
        col = values[:, s, :]
        out[:, s, :] = col[:, lo] * (1.0 - frac) + col[:, hi] * frac
    return out


def generate_scene(spec):
    """Return ``(cube, labels, abundances, endmembers)`` for a synthetic scene.

    Pixels are ``abundances @ endmembers``; then smile, additive noise and
    the stripe gains are applied in that order. Labels are the per-pixel
    argmax abundance.
    """
    spec.validate()
    rng = _streams(spec.seed)
    endmembers = _endmember_spectra(rng["endmembers"], spec.endmember_count, spec.bands)
    ab = _abundances(spec, rng["abundances"])
    values = (ab @ endmembers).reshape(spec.lines, spec.samples, spec.bands)
    if spec.smile_amplitude > 0:
        values = _apply_smile(values, smile_shifts(spec))
    if spec.noise_sigma > 0:
        values = values + spec.noise_sigma * rng["noise"].standard_normal(values.shape)
    if spec.stripe_sigma > 0:
        values = values * stripe_gains(spec)[None, :, None]
    if spec.saturation is not None:
        values = np.minimum(values, spec.saturation)

    names = [f"endmember_{i}" for i in range(spec.endmember_count)]
    if spec.target_radius > 0:
        names[-1] = "target"
    labels = LabelSet(np.arange(ab.shape[0]), ab.argmax(axis=1), tuple(names))
    return HsiCube(values), labels, ab, endmembers


def target_mask_from_labels(labels, class_id):
    return TargetMask(labels.pixel_index[labels.class_id == class_id])


def sample_indices(n_total, n, seed):
    """``n`` distinct indices from ``range(n_total)``, uniformly, by partial Fisher-Yates.

    The swap positions come from ``default_rng(seed).random(n)``: step ``i``
    swaps position ``i`` with ``i + floor(u_i * (n_total - i))``.
    """
    n_total = int(n_total)
    n = int(n)
    if not 1 <= n <= n_total:
        raise InvalidInput(f"cannot draw {n} pixels from {n_total}")
    u = np.random.default_rng(seed).random(n)
    jumps = (u * (n_total - np.arange(n))).astype(np.int64)
    swapped = {}
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        j = i + int(jumps[i])
        out[i] = swapped.get(j, j)
        swapped[j] = swapped.get(i, i)
    return out


def sample_pixels(cube, n, seed):
    """Rows of the pixel matrix at ``sample_indices(N, n, seed)``."""
    pixels = cube.pixels() if isinstance(cube, HsiCube) else np.asarray(cube, dtype=np.float64)
    return pixels[sample_indices(pixels.shape[0], n, seed)]


def standardize(components):
    """Zero-mean, unit population-std columns; constant columns become zeros."""
    z = np.asarray(components, dtype=np.float64)
    if z.ndim == 1:
        z = z[:, None]
    if z.shape[0] == 0:
        return z.copy()
    shift = z[0]
    mean = shift + (z - shift).mean(axis=0)
    centred = z - mean
    std = np.sqrt(np.mean(centred**2, axis=0))
    scale = np.maximum(np.abs(mean), np.abs(z).max(axis=0))
    const = std <= 1e-14 * np.where(scale > 0, scale, 1.0)
    out = np.where(const, 0.0, centred / np.where(const, 1.0, std))
    return out


def saturated_pixels(cube, level):
    """Boolean pixel mask of pixels that reach ``level`` in any band."""
    return np.any(cube.pixels() >= level, axis=1)


def save_labels(labels, path):
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["pixel_index", "class_id"])
            w.writerows(zip(labels.pixel_index.tolist(), labels.class_id.tolist()))
    except OSError as exc:
        raise HsdrIOError(path, exc.strerror or str(exc)) from exc


def load_labels(path, class_names=()):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise HsdrIOError(path, exc.strerror or str(exc)) from exc
    if rows and rows[0] and not rows[0][0].strip().lstrip("-").isdigit():
        rows = rows[1:]
    try:
        idx = [int(r[0]) for r in rows if r]
        cid = [int(r[1]) for r in rows if r]
    except (ValueError, IndexError) as exc:
        raise InvalidInput(f"{path}: malformed label row ({exc})") from None
    return LabelSet(np.array(idx, dtype=np.int64), np.array(cid, dtype=np.int64), class_names)


def save_mask(mask, path):
    try:
        with open(path, "w", newline="") as fh:
            fh.write("pixel_index\n")
            fh.writelines(f"{i}\n" for i in mask.indices.tolist())
    except OSError as exc:
        raise HsdrIOError(path, exc.strerror or str(exc)) from exc


def load_mask(path):
    try:
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise HsdrIOError(path, exc.strerror or str(exc)) from exc
    if lines and not lines[0].lstrip("-").isdigit():
        lines = lines[1:]
    try:
        return TargetMask(np.array([int(v.split(",")[0]) for v in lines], dtype=np.int64))
    except ValueError as exc:
        raise InvalidInput(f"{path}: malformed mask row ({exc})") from None
