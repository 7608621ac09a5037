"""Python bindings for the survival-bin prediction core."""

from ._phos import (
    Model,
    DataError,
    bin_probabilities,
    bin_widths,
    classification_accuracy,
    dice,
    load_volume,
    monotonic_penalty,
    os_prediction,
    saliency_mask,
    save_volume,
    spearman_r,
    squared_error_stats,
    total_loss,
    transition_bin,
    weighted_bin_predictions,
)

__all__ = [
    "Model",
    "DataError",
    "bin_probabilities",
    "bin_widths",
    "classification_accuracy",
    "dice",
    "load_volume",
    "monotonic_penalty",
    "os_prediction",
    "saliency_mask",
    "save_volume",
    "spearman_r",
    "squared_error_stats",
    "total_loss",
    "transition_bin",
    "weighted_bin_predictions",
]
