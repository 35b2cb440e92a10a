"""The dimensionality reducers behind one fit / encode / decode interface."""

import time

from ..errors import InvalidInput
from .base import (
    CENTERING_METHODS,
    LINEAR_METHODS,
    METHODS,
    FitConfig,
    FittedReducer,
    decode,
    encode,
    load_model,
    save_model,
)
from .dbn import autoencoder_loss_grad, fit_dbn
from .linear import (
    fit_fastica,
    fit_lpp,
    fit_osp,
    fit_pca,
    fit_pca_cs,
    fit_vsrp,
    knn_adjacency,
    lpp_matrices,
    osp_projector,
    vsrp_matrix,
)
from .nmf import fit_nmf

FITTERS = {
    "pca": fit_pca,
    "pca_cs": fit_pca_cs,
    "fastica": fit_fastica,
    "osp": fit_osp,
    "lpp": fit_lpp,
    "vsrp": fit_vsrp,
    "nmf": fit_nmf,
    "dbn": fit_dbn,
}


def fit(method, x, cfg):
    """Fit ``method`` on pixel matrix ``x``; the returned model carries its wall-clock fit time."""
    try:
        fitter = FITTERS[method]
    except KeyError:
        raise InvalidInput(f"unknown method {method!r}; expected one of {', '.join(METHODS)}") from None
    t0 = time.perf_counter()
    model = fitter(x, cfg)
    secs = time.perf_counter() - t0
    object.__setattr__(model, "fit_seconds", secs)
    return model


__all__ = [
    "CENTERING_METHODS",
    "FITTERS",
    "LINEAR_METHODS",
    "METHODS",
    "FitConfig",
    "FittedReducer",
    "autoencoder_loss_grad",
    "decode",
    "encode",
    "fit",
    "fit_dbn",
    "fit_fastica",
    "fit_lpp",
    "fit_nmf",
    "fit_osp",
    "fit_pca",
    "fit_pca_cs",
    "fit_vsrp",
    "knn_adjacency",
    "load_model",
    "lpp_matrices",
    "osp_projector",
    "save_model",
    "vsrp_matrix",
]
