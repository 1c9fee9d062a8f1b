"""Python bindings for the hazgam ground-motion toolkit."""

from ._hazgam import (
    FitError,
    HazgamError,
    Model,
    __version__,
    bin_count_component,
    combine_and_scale,
    eval_hazard,
    fit_hazard,
    fit_variance_components,
    flatfile_arrays,
    hazbin_loss,
    metrics,
    reference_hazard_coeffs,
    run_cli,
    screen_flatfile,
    sigmoid_scale,
    synth_flatfile,
    train_model,
)

__all__ = [
    "FitError",
    "HazgamError",
    "Model",
    "__version__",
    "bin_count_component",
    "combine_and_scale",
    "eval_hazard",
    "fit_hazard",
    "fit_variance_components",
    "flatfile_arrays",
    "hazbin_loss",
    "metrics",
    "reference_hazard_coeffs",
    "run_cli",
    "screen_flatfile",
    "sigmoid_scale",
    "synth_flatfile",
    "train_model",
]
