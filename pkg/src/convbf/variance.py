"""Source variance updates.

``y`` arguments are output tensors ``(F, T, >=J)``; only the first J
(speech) outputs are used.
"""
import numpy as np

from .model import VarianceField


def update_coarse(y, num_sources, floor):
    """Frequency-averaged output power, ``(T, J)``."""
    power = np.abs(y[:, :, :num_sources]) ** 2
    return VarianceField(np.maximum(power.mean(axis=0), floor), floor)


def update_fine(y, num_sources, floor):
    """Per-bin output power, ``(F, T, J)``."""
    power = np.abs(y[:, :, :num_sources]) ** 2
    return VarianceField(np.maximum(power, floor), floor)


def update_map(y_projected, prior, alpha, floor):
    """MAP variance under an inverse-Gamma prior with scale ``gamma``.

    ``y_projected`` must already be rescaled to the reference microphone.
    """
    gamma = getattr(prior, "gamma", prior)
    J = gamma.shape[-1]
    y = y_projected[:, :, :J]
    if y.shape != gamma.shape:
        raise ValueError(f"prior shape {gamma.shape} does not match outputs {y.shape}")
    lam = (np.abs(y) ** 2 + gamma) / (alpha + 2.0)
    return VarianceField(np.maximum(lam, floor), floor)
