"""Python access to the deforma rendering and fitting engine."""

from ._core import (
    CheckpointError,
    FaceBasis,
    InvalidArgument,
    NumericalError,
    chamfer,
    composite,
    fit_config_keys,
    fit_synthetic,
    gradcheck,
    init_checkpoint,
    render,
    synth_basis,
    training_hyperparams,
)

__all__ = [
    "CheckpointError",
    "FaceBasis",
    "InvalidArgument",
    "NumericalError",
    "chamfer",
    "composite",
    "fit_config_keys",
    "fit_synthetic",
    "gradcheck",
    "init_checkpoint",
    "render",
    "synth_basis",
    "training_hyperparams",
]
