"""Central-difference verification of the analytic gradients."""

from __future__ import annotations

import numpy as np

from .layers import softmax_cross_entropy
from .model import Model


def gradient_check(model: Model, spectra: np.ndarray, labels: np.ndarray,
                   h: float = 1e-3) -> float:
    """Max relative error between analytic and numeric parameter gradients.

    Perturbs every parameter entry by +/- h and compares the central
    difference of the mean loss against the backward pass, using
    err = |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    Build the model with dtype float64 (and keep it small, < 50k
    parameters) so the differences are resolved well below the 1e-4
    acceptance threshold.
    """
    x = model.prepare_input(spectra)
    logits = model.forward(x, train=True)
    _, grad = softmax_cross_entropy(logits, labels)
    model.zero_gradients()
    model.backward(grad)
    analytic = [g.copy() for g in model.gradients()]

    def loss_at() -> float:
        out = model.forward(model.prepare_input(spectra), train=True)
        value, _ = softmax_cross_entropy(out, labels)
        return value

    worst = 0.0
    for param, grads in zip(model.parameters(), analytic):
        flat = param.reshape(-1)
        flat_grad = grads.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            loss_plus = loss_at()
            flat[i] = original - h
            loss_minus = loss_at()
            flat[i] = original
            numeric = (loss_plus - loss_minus) / (2.0 * h)
            denom = max(abs(float(flat_grad[i])), abs(numeric), 1e-8)
            worst = max(worst, abs(float(flat_grad[i]) - numeric) / denom)
    return worst
