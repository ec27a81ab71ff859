"""Randomised gradient checks of every trained loss against finite differences."""

from __future__ import annotations

from typing import Callable

import numpy as np

from pinda import autodiff as ad
from pinda.autodiff import Tensor
from pinda.contrastive import ContrastiveConfig, EmbeddingBatch, EncoderModel, infonce_loss
from pinda.evaluate import softmax_regression_loss
from pinda.noise import NoiseGenerator, norm_penalty
from pinda.nn import parameters
from pinda.train import TrainSettings, pinda_losses

TOLERANCE = 1e-4
STEP = 1e-5


def _sizes(rng: np.random.Generator) -> tuple[int, int]:
    return int(rng.integers(2, 9)), int(rng.integers(2, 17))


def _encoder(d: int, rng) -> EncoderModel:
    return EncoderModel(d, rng, hidden=(6,), embed_dim=5, head=(5, 4))


def infonce_instance(seed: int) -> float:
    rng = np.random.default_rng(seed)
    m, d = _sizes(rng)
    enc = _encoder(d, rng)
    x1, x2 = rng.standard_normal((m, d)), rng.standard_normal((m, d))
    cfg = ContrastiveConfig(temperature=float(rng.uniform(0.1, 1.0)), symmetric=bool(seed % 2))
    return ad.gradcheck(lambda: infonce_loss(EmbeddingBatch(enc(x1), enc(x2)), cfg), parameters(enc), STEP)


def pinda_instance(seed: int, kind: str) -> float:
    rng = np.random.default_rng(seed)
    m, d = _sizes(rng)
    enc = _encoder(d, rng)
    gen = NoiseGenerator(d, kind, rng, hidden=(6,))
    x = rng.standard_normal((m, d))
    noise_seed = int(rng.integers(1 << 31))
    settings = TrainSettings(ContrastiveConfig(temperature=0.5), lambda_norm=0.5)

    def loss():
        # identical base draw on every evaluation
        losses, eps = pinda_losses(x, enc, gen, x, settings, np.random.default_rng(noise_seed))
        return ad.mean(losses) + settings.lambda_norm * norm_penalty(eps)

    return ad.gradcheck(loss, parameters(enc) + parameters(gen), STEP)


def norm_penalty_instance(seed: int) -> float:
    rng = np.random.default_rng(seed)
    m, d = _sizes(rng)
    eps = Tensor(rng.standard_normal((m, d)), requires_grad=True)
    return ad.gradcheck(lambda: norm_penalty(eps), [eps], STEP)


def softmax_head_instance(seed: int) -> float:
    rng = np.random.default_rng(seed)
    m, d = _sizes(rng)
    classes = int(rng.integers(2, 6))
    x = rng.standard_normal((m, d))
    y = rng.integers(classes, size=m)
    w = Tensor(rng.standard_normal((d, classes)), requires_grad=True)
    b = Tensor(rng.standard_normal(classes), requires_grad=True)
    return ad.gradcheck(lambda: softmax_regression_loss(w, b, x, y), [w, b], STEP)


SUITE: dict[str, Callable[[int], float]] = {
    "infonce": infonce_instance,
    "pinda_gaussian_zero_mean": lambda s: pinda_instance(s, "gaussian_zero_mean"),
    "pinda_gaussian_learned_mean": lambda s: pinda_instance(s, "gaussian_learned_mean"),
    "pinda_uniform": lambda s: pinda_instance(s, "uniform"),
    "norm_penalty": norm_penalty_instance,
    "softmax_head": softmax_head_instance,
}


def run_suite(instances: int = 20, seed: int = 0) -> dict[str, float]:
    """Worst relative error per loss over ``instances`` random cases."""
    return {name: max(fn(seed + i) for i in range(instances)) for name, fn in SUITE.items()}
