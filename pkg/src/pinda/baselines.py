"""Untrained-noise comparison augmentations."""

from __future__ import annotations

import numpy as np

from pinda import autodiff as ad
from pinda.autodiff import Tensor


def baseline_random_noise_view(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """``x + N(0, I)``; ``x`` is expected to be rescaled already."""
    x = np.asarray(x, dtype=np.float64)
    return x + rng.standard_normal(x.shape)


def baseline_simcl_repr_noise(h, rng: np.random.Generator, scale: float = 1.0) -> Tensor:
    """Add a random direction of length ``scale`` to each representation row."""
    h = ad.as_tensor(h)
    draw = rng.standard_normal(h.shape)
    norms = np.linalg.norm(draw, axis=-1, keepdims=True)
    norms[norms == 0] = 1.0
    return h + scale * draw / norms
