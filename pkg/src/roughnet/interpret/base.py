"""Shared attribution types and helpers.

Attributions live in the network's input space (scaled and whitened features);
feature i is labelled by the grid cell of column i of the dataset.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from roughnet.errors import ValidationError
from roughnet.pricer.params import PARAM_NAMES

METHODS = ("lime", "gradient_input", "deeplift", "lrp", "shap")  # names accepted by the CLI


@dataclass
class AttributionResult:
    method: str
    output: int
    instance: int
    phi: np.ndarray
    base: float | None = None  # phi_0, when the method defines one
    prediction: float = float("nan")
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        if not np.all(np.isfinite(self.phi)):
            raise ValidationError(f"{self.method}: non-finite attribution for instance {self.instance}")

    @property
    def output_name(self):
        return PARAM_NAMES[self.output]


def output_index(j):
    """Accept an output index or a parameter name."""
    if isinstance(j, str):
        try:
            return PARAM_NAMES.index(j)
        except ValueError:
            raise ValidationError(f"unknown output {j!r}; choose from {', '.join(PARAM_NAMES)}")
    j = int(j)
    if not 0 <= j < len(PARAM_NAMES):
        raise ValidationError(f"output index {j} out of range")
    return j


def evaluate_output(f, X, j):
    """Column j of f(X) for a prediction function returning (n,) or (n, outputs)."""
    y = np.asarray(f(np.atleast_2d(X)), dtype=float)
    return y[:, j] if y.ndim == 2 else y


def mask_inputs(x, reference, masks):
    """h_x: keep x where the mask is 1, use the reference elsewhere."""
    masks = np.asarray(masks, dtype=float)
    return masks * np.asarray(x, float) + (1.0 - masks) * np.asarray(reference, float)
