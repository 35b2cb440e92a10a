"""Dimensionality reduction for hyperspectral cubes, with the evaluation suite used to compare methods."""

from . import hsio, metrics, numerics, reducers, tasks
from .errors import (
    ConfigError,
    DegenerateData,
    FormatError,
    HsdrError,
    HsdrIOError,
    InvalidInput,
    NumericalFailure,
)
from .hsio import (
    HsiCube,
    LabelSet,
    SceneSpec,
    TargetMask,
    generate_scene,
    load_cube,
    save_cube,
)
from .reducers import FitConfig, FittedReducer, decode, encode, fit

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegenerateData",
    "FitConfig",
    "FittedReducer",
    "FormatError",
    "HsdrError",
    "HsdrIOError",
    "HsiCube",
    "InvalidInput",
    "LabelSet",
    "NumericalFailure",
    "SceneSpec",
    "TargetMask",
    "decode",
    "encode",
    "fit",
    "generate_scene",
    "hsio",
    "load_cube",
    "metrics",
    "numerics",
    "reducers",
    "save_cube",
    "tasks",
]
