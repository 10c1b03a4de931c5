"""Interpretable text classification via distributions over latent features.

The package bundles a small numpy autodiff core, convolutional and BiLSTM
sequence encoders, the latent-feature-bag classifier plus the two
classical baselines, dataset loaders, Adam training with early stopping,
and the probabilistic interpretation tooling (per-word category support,
highlighted text, heatmaps).
"""

from .tensor import ShapeError, Tape, Tensor, backward, parameter
from . import ops
from .gradcheck import finite_diff_check, run_gradcheck_suite

__version__ = "0.1.0"

__all__ = [
    "ShapeError",
    "Tape",
    "Tensor",
    "backward",
    "finite_diff_check",
    "ops",
    "parameter",
    "run_gradcheck_suite",
]
