"""Experiment configuration: ``key = value`` text files with ``#`` comments."""

from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, HsdrIOError
from .hsio import SceneSpec
from .reducers import METHODS, FitConfig

COMMANDS = ("synth", "fit", "transform", "reconstruct", "eval-mi", "eval-atpv", "detect",
            "classify", "bench")

# FitConfig knobs settable as ``fit.<knob>`` or ``fit.<method>.<knob>``
_FIT_KNOBS = {
    "tol": float, "max_iter": int, "lpp_k": int, "lpp_subsample": int, "ica_alpha": float,
    "dbn_pretrain_epochs": int, "dbn_lr": float, "dbn_finetune_lr": float,
    "dbn_momentum": float, "dbn_l1": float, "dbn_chain": int, "dbn_batch": int,
    "cs_columns": int,
}
_SCENE_KEYS = {
    "lines": int, "samples": int, "bands": int, "endmember_count": int,
    "abundance_smoothness": float, "noise_sigma": float, "stripe_sigma": float,
    "smile_amplitude": float, "seed": int, "sharpness": float, "pure": bool,
    "target_radius": float, "saturation": float,
}
# plain keys: name -> (parser, is_list)
_KEYS = {
    "command": (str, False), "input": (str, False), "labels": (str, False),
    "mask": (str, False), "model": (str, False), "output": (str, False),
    "format": (str, False), "methods": (str, True), "method": (str, False),
    "r": (int, True), "n": (int, True), "seed": (int, False), "repeats": (int, False),
    "mi_k": (int, False), "mi_sample": (int, False), "mi_components": (int, False),
    "train_pixels": (int, False), "eval_pixels": (int, False),
    "target_class": (int, False), "exclude_saturated": (bool, False),
    "detectors": (str, True), "figures": (bool, False), "atpv_components": (int, False),
    "fit_pixels": (int, False),
}


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(kind, text):
    if kind is bool:
        return _parse_bool(text)
    if kind is int:
        return int(text, 0) if text.strip().lower().startswith("0x") else int(text)
    return kind(text.strip())


def parse_config_text(text, source="<config>"):
    """Parse ``key = value`` lines into a dict of raw strings."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, value = (s.strip() for s in body.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        raw[key] = value
    return raw


@dataclass
class ExperimentConfig:
    command: str
    values: dict = field(default_factory=dict)
    scene: dict = field(default_factory=dict)
    fit: dict = field(default_factory=dict)
    fit_by_method: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.values.get(key, default)

    def require(self, key):
        if self.values.get(key) in (None, [], ""):
            raise ConfigError(f"missing required config field {key!r} for {self.command}")
        return self.values[key]

    @property
    def seed(self):
        return self.values.get("seed", 0)

    @property
    def methods(self):
        ms = self.values.get("methods")
        if ms is None and "method" in self.values:
            ms = [self.values["method"]]
        return list(ms) if ms else list(METHODS)

    def fit_config(self, method, r):
        kw = dict(self.fit)
        kw.update(self.fit_by_method.get(method, {}))
        if kw.get("lpp_subsample") == 0:
            kw["lpp_subsample"] = None
        return FitConfig(r=r, seed=self.seed, **kw)

    def scene_spec(self):
        kw = dict(self.scene)
        kw.setdefault("seed", self.seed)
        return SceneSpec(**kw)

    def echo(self):
        """Fully resolved config as a JSON-friendly dict."""
        out = {"command": self.command}
        out.update({k: v for k, v in sorted(self.values.items())})
        for k, v in sorted(self.scene.items()):
            out[f"scene.{k}"] = v
        for k, v in sorted(self.fit.items()):
            out[f"fit.{k}"] = v
        for m, d in sorted(self.fit_by_method.items()):
            for k, v in sorted(d.items()):
                out[f"fit.{m}.{k}"] = v
        return out


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ", ".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def config_text(echo):
    """Render a resolved config (see :meth:`ExperimentConfig.echo`) back to ``key = value`` text."""
    return "".join(f"{k} = {_format_value(v)}\n" for k, v in echo.items() if v is not None)


def build_config(raw, command=None, seed=None):
    """Type-check raw key/value pairs; ``command`` and ``seed`` override the file."""
    cmd = command or raw.get("command")
    if cmd not in COMMANDS:
        raise ConfigError(f"unknown command {cmd!r}; expected one of {', '.join(COMMANDS)}")
    cfg = ExperimentConfig(cmd)
    for key, text in raw.items():
        try:
            if key.startswith("scene."):
                name = key[6:]
                if name not in _SCENE_KEYS:
                    raise ConfigError(f"unknown scene field {key!r}")
                cfg.scene[name] = _convert(_SCENE_KEYS[name], text)
            elif key.startswith("fit."):
                parts = key.split(".")
                if len(parts) == 2:
                    target, name = cfg.fit, parts[1]
                elif len(parts) == 3 and parts[1] in METHODS:
                    target, name = cfg.fit_by_method.setdefault(parts[1], {}), parts[2]
                else:
                    raise ConfigError(f"unknown fit field {key!r}")
                if name not in _FIT_KNOBS:
                    raise ConfigError(f"unknown fit field {key!r}")
                target[name] = _convert(_FIT_KNOBS[name], text)
            elif key in _KEYS:
                kind, is_list = _KEYS[key]
                if is_list:
                    items = [s.strip() for s in text.split(",") if s.strip()]
                    if not items:
                        raise ConfigError(f"config field {key!r} is an empty list")
                    cfg.values[key] = [_convert(kind, s) for s in items]
                else:
                    cfg.values[key] = _convert(kind, text)
            else:
                raise ConfigError(f"unknown config field {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"config field {key!r}: {exc}") from None
    cfg.values["command"] = cmd
    if seed is not None:
        cfg.values["seed"] = int(seed)
    cfg.values.setdefault("seed", 0)
    _validate(cfg)
    return cfg


def _validate(cfg):
    for m in cfg.values.get("methods", []) + ([cfg.values["method"]] if "method" in cfg.values else []):
        if m not in METHODS:
            raise ConfigError(f"config field 'methods': unknown method tag {m!r}")
    for key in ("r", "n"):
        vals = cfg.values.get(key)
        if vals is not None and any(v < 0 or (key == "n" and v == 0) for v in vals):
            raise ConfigError(f"config field {key!r} must hold positive values")
    rep = cfg.values.get("repeats")
    if rep is not None and (rep < 3 or rep % 2 == 0):
        raise ConfigError("config field 'repeats' must be odd and >= 3")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    fmt = cfg.values.get("format")
    if fmt is not None and fmt not in ("json", "csv"):
        raise ConfigError(f"config field 'format' must be json or csv, got {fmt!r}")
    for d in cfg.values.get("detectors", []):
        if d not in ("sam", "ace"):
            raise ConfigError(f"config field 'detectors': unknown detector {d!r}")
    for path_key in ("input", "labels", "mask", "model", "output"):
        if path_key in cfg.values and not cfg.values[path_key]:
            raise ConfigError(f"config field {path_key!r} is empty")
    if cfg.scene:
        try:
            cfg.scene_spec().validate()
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"scene: {exc}") from None


def load_config(path, command=None, seed=None):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise HsdrIOError(path, exc.strerror or str(exc)) from exc
    return build_config(parse_config_text(text, str(path)), command=command, seed=seed)
