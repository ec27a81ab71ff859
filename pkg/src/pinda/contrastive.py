"""Contrastive encoder, NT-Xent style losses and the auxiliary-Gaussian quantities.

A per-sample loss ``l = -log(pos / (pos + neg))`` is turned into a
confidence ``gamma = exp(-l)`` in (0, 1], which is the precision of an
auxiliary zero-mean Gaussian.  Its entropy measures how hard the
contrastive task is for that sample.  All entropies are in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from pinda import autodiff as ad
from pinda.autodiff import ContractError, DimensionError, DomainError, Tensor
from pinda.nn import MLP

HALF_LOG_2PI_E = 0.5 * math.log(2.0 * math.pi * math.e)
LOG_C = -0.5 * math.log(2.0 * math.pi)

VARIANTS = ("simclr", "memory_bank")


class EncoderModel:
    """Backbone MLP followed by a projection head.

    ``representation`` (the backbone output) is what evaluation reads;
    ``project`` maps it to the embedding the losses consume.
    """

    def __init__(
        self,
        input_dim: int,
        rng: np.random.Generator,
        hidden: Sequence[int] = (1024, 1024),
        embed_dim: int = 256,
        head: Sequence[int] = (256, 128),
    ):
        self.input_dim = input_dim
        self.backbone = MLP([input_dim, *hidden, embed_dim], rng)
        self.head = MLP([embed_dim, *head], rng)

    def representation(self, x) -> Tensor:
        x = ad.as_tensor(x)
        if x.shape[-1] != self.input_dim:
            raise DimensionError(f"encoder expects {self.input_dim} features, got {x.shape[-1]}")
        return self.backbone(x)

    def project(self, h: Tensor) -> Tensor:
        return self.head(h)

    def __call__(self, x) -> Tensor:
        return self.project(self.representation(x))

    def named_parameters(self):
        yield from self.backbone.named_parameters("backbone")
        yield from self.head.named_parameters("head")

    def represent_numpy(self, x: np.ndarray, chunk: int = 2048) -> np.ndarray:
        """Backbone representations without recording gradients."""
        out = []
        for start in range(0, len(x), chunk):
            h = np.asarray(x[start:start + chunk], dtype=np.float64)
            for i, layer in enumerate(self.backbone.layers):
                h = h @ layer.weight.data + layer.bias.data
                if i < len(self.backbone.layers) - 1:
                    h = np.maximum(h, 0.0)
            out.append(h)
        return np.concatenate(out, axis=0) if out else np.zeros((0, self.backbone.widths[-1]))


@dataclass
class ContrastiveConfig:
    temperature: float = 0.1
    positive_loss_variant: str = "simclr"
    # also score each positive view as an anchor (standard NT-Xent averaging over 2m views)
    symmetric: bool = True

    def __post_init__(self):
        if not self.temperature > 0:
            raise ContractError("temperature must be positive")
        if self.positive_loss_variant not in VARIANTS:
            raise ContractError(f"unknown positive loss variant {self.positive_loss_variant!r}")


@dataclass
class EmbeddingBatch:
    anchors: Tensor
    positives: Tensor
    negatives: Tensor | None = None

    def __post_init__(self):
        self.anchors = ad.as_tensor(self.anchors)
        self.positives = ad.as_tensor(self.positives)
        if self.negatives is not None:
            self.negatives = ad.as_tensor(self.negatives)
        if self.anchors.ndim != 2 or self.anchors.shape != self.positives.shape:
            raise DimensionError(
                f"anchors {self.anchors.shape} and positives {self.positives.shape} must be equal 2-d shapes"
            )
        if self.negatives is not None and self.negatives.shape[1] != self.anchors.shape[1]:
            raise DimensionError("extra negatives have a different embedding width")

    @property
    def size(self) -> int:
        return self.anchors.shape[0]


@dataclass(frozen=True)
class AuxiliaryGaussian:
    """Zero-mean Gaussian with precision ``gamma`` in (0, 1]."""

    precision: float

    def __post_init__(self):
        if not 0 < self.precision <= 1:
            raise DomainError(f"precision must lie in (0, 1], got {self.precision}")

    @classmethod
    def from_loss(cls, loss_value: float) -> AuxiliaryGaussian:
        return cls(float(gamma(loss_value)))

    @property
    def variance(self) -> float:
        return 1.0 / self.precision

    def entropy(self) -> float:
        return float(gaussian_entropy(self.precision))


def cosine_similarity(u, v) -> Tensor:
    u, v = ad.as_tensor(u), ad.as_tensor(v)
    if u.shape != v.shape:
        raise DimensionError(f"vectors differ in shape: {u.shape} vs {v.shape}")
    nu, nv = ad.l2_norm(u), ad.l2_norm(v)
    if nu.item() == 0 or nv.item() == 0:
        raise DomainError("cosine similarity of a zero vector")
    return ad.tsum(u * v) / (nu * nv)


def _unit_rows(z: Tensor) -> Tensor:
    norms = ad.l2_norm(z, axis=1, keepdims=True)
    if np.any(norms.data == 0):
        raise DomainError("zero-norm embedding")
    return z / norms


def _pos_neg(batch: EmbeddingBatch, cfg: ContrastiveConfig) -> tuple[Tensor, Tensor]:
    """Positive and negative terms for every anchor view.

    Rows ``0..m-1`` use the anchors; when ``cfg.symmetric`` rows ``m..2m-1``
    use the positives as anchors.  Negatives of an anchor are every other
    in-batch view plus any extra negatives.
    """
    m = batch.size
    if m == 0:
        raise ContractError("empty batch")
    parts = [batch.anchors, batch.positives]
    if batch.negatives is not None:
        parts.append(batch.negatives)
    # both variants act on unit-normalised embeddings; they differ only in
    # how the literature names them
    z = _unit_rows(ad.concat(parts, axis=0))
    n_views = z.shape[0]
    n_anchor = 2 * m if cfg.symmetric else m
    if n_views - 2 < 1:
        raise ContractError("no negatives available for the anchor")
    anchors = ad.take_rows(z, np.arange(n_anchor))
    logits = ad.matmul(anchors, ad.transpose(z)) / cfg.temperature
    e = ad.exp(logits)

    rows = np.arange(n_anchor)
    partner = np.where(rows < m, rows + m, rows - m)
    pos_mask = np.zeros((n_anchor, n_views))
    pos_mask[rows, partner] = 1.0
    neg_mask = np.ones((n_anchor, n_views))
    neg_mask[rows, rows] = 0.0
    neg_mask[rows, partner] = 0.0
    pos = ad.tsum(e * pos_mask, axis=1)
    neg = ad.tsum(e * neg_mask, axis=1)
    return pos, neg


def positive_losses(batch: EmbeddingBatch, cfg: ContrastiveConfig) -> Tensor:
    return _pos_neg(batch, cfg)[0]


def negative_losses(batch: EmbeddingBatch, cfg: ContrastiveConfig) -> Tensor:
    return _pos_neg(batch, cfg)[1]


def positive_loss(batch: EmbeddingBatch, i: int, cfg: ContrastiveConfig) -> Tensor:
    return _select(positive_losses(batch, cfg), i)


def negative_loss(batch: EmbeddingBatch, i: int, cfg: ContrastiveConfig) -> Tensor:
    return _select(negative_losses(batch, cfg), i)


def _select(v: Tensor, i: int) -> Tensor:
    if not 0 <= i < v.shape[0]:
        raise ContractError(f"sample index {i} out of range for {v.shape[0]} anchor views")
    return ad.reshape(ad.take_rows(v, [i]), ())


def confidences(batch: EmbeddingBatch, cfg: ContrastiveConfig) -> Tensor:
    """``pos / (pos + neg)`` per anchor view."""
    pos, neg = _pos_neg(batch, cfg)
    return pos / (pos + neg)


def per_sample_losses(batch: EmbeddingBatch, cfg: ContrastiveConfig) -> Tensor:
    return -ad.log(confidences(batch, cfg))


def per_sample_loss(batch: EmbeddingBatch, i: int, cfg: ContrastiveConfig) -> Tensor:
    return _select(per_sample_losses(batch, cfg), i)


def loss_from_terms(pos, neg) -> float:
    """``-log(pos / (pos + neg))`` for plain numbers."""
    return -math.log(pos / (pos + neg))


def infonce_loss(batch: EmbeddingBatch, cfg: ContrastiveConfig) -> Tensor:
    return ad.mean(per_sample_losses(batch, cfg))


def gamma(loss_value):
    """Confidence ``exp(-loss)``; equals ``pos / (pos + neg)`` by construction."""
    if isinstance(loss_value, Tensor):
        return ad.exp(-loss_value)
    return np.exp(-np.asarray(loss_value, dtype=np.float64))


def gaussian_entropy(precision):
    """Entropy in nats of N(0, 1/precision)."""
    p = np.asarray(precision, dtype=np.float64)
    if np.any(p <= 0):
        raise DomainError("precision must be positive")
    return HALF_LOG_2PI_E - 0.5 * np.log(p)


def task_entropy(dataset_losses) -> float:
    losses = np.asarray(dataset_losses, dtype=np.float64)
    if losses.size == 0:
        raise ContractError("task entropy of an empty dataset")
    if np.any(losses < 0):
        raise ContractError("contrastive losses must be non-negative")
    # -0.5 * log(exp(-l)) == 0.5 * l; avoids underflow of gamma for large l
    return float(np.mean(HALF_LOG_2PI_E + 0.5 * losses))


def entropy_integrand_mean(log_gamma: Tensor) -> Tensor:
    """Mean of ``log C + log(gamma)/2 - 1/2``: the closed-form alpha integral."""
    return ad.mean(LOG_C + 0.5 * log_gamma - 0.5)


def neg_conditional_entropy_mc(
    x,
    encoder: EncoderModel,
    sampler: Callable[[np.ndarray, np.random.Generator], Tensor],
    cfg: ContrastiveConfig,
    mc_samples: int = 1,
    rng: np.random.Generator | None = None,
    partner=None,
) -> Tensor:
    """Monte Carlo estimate of ``-H(T|E)`` over a batch of samples.

    For each of ``mc_samples`` noise draws ``eps = sampler(x, rng)`` the views
    ``(x + eps, partner)`` are scored with in-batch negatives, and the inner
    Gaussian integral is evaluated in closed form.  ``partner`` defaults to
    the clean samples.
    """
    if mc_samples < 1:
        raise ContractError("mc_samples must be at least 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    x = ad.as_tensor(x)
    partner_z = encoder(x if partner is None else partner)
    total = None
    for _ in range(mc_samples):
        eps = sampler(x.data, rng)
        noisy_z = encoder(x + eps)
        log_gamma = ad.log(confidences(EmbeddingBatch(noisy_z, partner_z), cfg))
        term = entropy_integrand_mean(log_gamma)
        total = term if total is None else total + term
    return total / mc_samples


def mutual_information_estimate(task_entropy_value: float, neg_conditional_entropy_value) -> float:
    """``H(T) - H(T|E)`` given ``H(T)`` and the estimate of ``-H(T|E)``."""
    neg = neg_conditional_entropy_value
    neg = neg.item() if isinstance(neg, Tensor) else float(neg)
    return float(task_entropy_value) + neg
