"""Joint training of the contrastive encoder and the noise generator."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from pinda import autodiff as ad
from pinda.autodiff import ContractError, DimensionError, Tensor
from pinda.baselines import baseline_random_noise_view, baseline_simcl_repr_noise
from pinda.contrastive import ContrastiveConfig, EmbeddingBatch, EncoderModel, per_sample_losses
from pinda.noise import NoiseGenerator, norm_penalty

log = logging.getLogger(__name__)

AUGMENTATION_KINDS = ("identity", "gaussian_jitter", "feature_dropout", "random_noise", "shift", "pinda")


@dataclass(frozen=True)
class Augmentation:
    kind: str
    sigma: float = 1.0
    p: float = 0.1
    offset: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in AUGMENTATION_KINDS:
            raise ContractError(f"unknown augmentation {self.kind!r}")
        if self.kind == "feature_dropout" and not 0 <= self.p < 1:
            raise ContractError("dropout probability must lie in [0, 1)")

    @property
    def is_pinda(self) -> bool:
        return self.kind == "pinda"

    def apply(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Apply a predefined (non-learned) augmentation to rows of ``x``."""
        if self.kind == "identity":
            return x
        if self.kind == "gaussian_jitter":
            return x + self.sigma * rng.standard_normal(x.shape)
        if self.kind == "random_noise":
            return baseline_random_noise_view(x, rng)
        if self.kind == "feature_dropout":
            keep = rng.uniform(size=x.shape) >= self.p
            return x * keep / (1.0 - self.p)
        if self.kind == "shift":
            offset = np.asarray(self.offset, dtype=np.float64)
            if offset.shape != x.shape[-1:]:
                raise DimensionError("shift offset width differs from the data")
            return x + offset
        raise ContractError("the learned augmentation has no fixed form")

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "gaussian_jitter":
            out["sigma"] = self.sigma
        if self.kind == "feature_dropout":
            out["p"] = self.p
        if self.kind == "shift":
            out["offset"] = list(self.offset)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> Augmentation:
        d = dict(d)
        if "offset" in d and d["offset"] is not None:
            d["offset"] = tuple(float(v) for v in d["offset"])
        return cls(**d)


IDENTITY = Augmentation("identity")
PINDA = Augmentation("pinda")


class AugmentationSet:
    """The pool both views of a sample are drawn from.

    An empty user pool falls back to the identity; the learned augmentation
    is appended exactly once when ``with_pinda``.
    """

    def __init__(self, augmentations: Sequence[Augmentation] = (), with_pinda: bool = True):
        augs = [a for a in augmentations if not a.is_pinda]
        if not augs:
            augs = [IDENTITY]
        if with_pinda:
            augs.append(PINDA)
        self.augmentations = augs

    def __len__(self) -> int:
        return len(self.augmentations)

    def __getitem__(self, i: int) -> Augmentation:
        return self.augmentations[i]

    @property
    def has_pinda(self) -> bool:
        return any(a.is_pinda for a in self.augmentations)

    def draw(self, m: int, rng: np.random.Generator) -> np.ndarray:
        """Independent uniform draws of two augmentation indices per sample."""
        return rng.integers(len(self.augmentations), size=(m, 2))


@dataclass
class TrainSettings:
    contrastive: ContrastiveConfig = field(default_factory=ContrastiveConfig)
    lambda_norm: float = 1.0
    mc_samples: int = 1
    repr_noise_scale: float = 0.0


@dataclass
class BatchLoss:
    loss: Tensor
    contrastive: Tensor
    penalty: Tensor | None
    n_noise_rows: int


def _views(x: np.ndarray, column: np.ndarray, augset: AugmentationSet, generator, rng_aug, rng_noise):
    """One view per sample; learned-noise rows stay on the tape."""
    m = x.shape[0]
    fixed = np.array(x, dtype=np.float64, copy=True)
    pinda_rows = []
    for k, aug in enumerate(augset.augmentations):
        rows = np.flatnonzero(column == k)
        if rows.size == 0:
            continue
        if aug.is_pinda:
            pinda_rows = rows
        else:
            fixed[rows] = aug.apply(x[rows], rng_aug)
    if len(pinda_rows) == 0:
        return Tensor(fixed), None
    if generator is None:
        raise ContractError("the learned augmentation was drawn but no generator is configured")
    x_p = Tensor(x[pinda_rows])
    sample = generator.sample(x_p, rng_noise)
    noisy = x_p + sample.epsilon
    index = np.arange(m)
    index[pinda_rows] = m + np.arange(len(pinda_rows))
    view = ad.take_rows(ad.concat([Tensor(fixed), noisy], axis=0), index)
    return view, sample.epsilon


def encode_pairs(encoder: EncoderModel, v1: Tensor, v2: Tensor, settings: TrainSettings, rng_repr=None) -> EmbeddingBatch:
    m = v1.shape[0]
    h = encoder.representation(ad.concat([v1, v2], axis=0))
    if settings.repr_noise_scale > 0:
        h = baseline_simcl_repr_noise(h, rng_repr, settings.repr_noise_scale)
    z = encoder.project(h)
    return EmbeddingBatch(ad.take_rows(z, np.arange(m)), ad.take_rows(z, np.arange(m, 2 * m)))


def pinda_losses(
    x: np.ndarray,
    encoder: EncoderModel,
    generator: NoiseGenerator,
    partner_views: np.ndarray,
    settings: TrainSettings,
    rng: np.random.Generator,
) -> tuple[Tensor, Tensor]:
    """Per-sample losses with the noisy view ``x + eps`` paired with ``partner_views``.

    Returns the losses (one per anchor view) and the noise that was drawn.
    """
    x_t = Tensor(x)
    eps = generator.sample(x_t, rng).epsilon
    batch = encode_pairs(encoder, x_t + eps, Tensor(partner_views), settings)
    return per_sample_losses(batch, settings.contrastive), eps


def pinda_sample_loss(x, encoder, generator, partner_views, settings, rng, i: int) -> Tensor:
    losses, _ = pinda_losses(x, encoder, generator, partner_views, settings, rng)
    return ad.reshape(ad.take_rows(losses, [i]), ())


def batch_loss(
    x: np.ndarray,
    encoder: EncoderModel,
    generator: NoiseGenerator | None,
    augset: AugmentationSet,
    settings: TrainSettings,
    rng_aug: np.random.Generator,
    rng_noise: np.random.Generator,
    rng_repr: np.random.Generator | None = None,
    draws: np.ndarray | None = None,
) -> BatchLoss:
    """Mixed-augmentation contrastive loss over one batch plus the noise-norm penalty."""
    x = np.asarray(x, dtype=np.float64)
    m = x.shape[0]
    if draws is None:
        draws = augset.draw(m, rng_aug)
    draws = np.asarray(draws)
    if draws.shape != (m, 2):
        raise DimensionError("need two augmentation draws per sample")
    contrastive = None
    noise_rows = []
    for _ in range(settings.mc_samples):
        v1, e1 = _views(x, draws[:, 0], augset, generator, rng_aug, rng_noise)
        v2, e2 = _views(x, draws[:, 1], augset, generator, rng_aug, rng_noise)
        noise_rows += [e for e in (e1, e2) if e is not None]
        batch = encode_pairs(encoder, v1, v2, settings, rng_repr)
        term = ad.mean(per_sample_losses(batch, settings.contrastive))
        contrastive = term if contrastive is None else contrastive + term
    if settings.mc_samples > 1:
        contrastive = contrastive / settings.mc_samples
    penalty = None
    loss = contrastive
    if noise_rows:
        penalty = norm_penalty(ad.concat(noise_rows, axis=0))
        if settings.lambda_norm:
            loss = contrastive + settings.lambda_norm * penalty
    n_noise = sum(e.shape[0] for e in noise_rows)
    return BatchLoss(loss, contrastive, penalty, n_noise)


# ---------------------------------------------------------------- optimiser


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[Tensor], **kwargs) -> OptimizerState:
        state = cls(**kwargs)
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
        return state


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray | None], state: OptimizerState) -> None:
    """Bias-corrected Adam update of ``params`` in place; ``None`` grads count as zero."""
    if len(params) != len(state.m) or len(grads) != len(params):
        raise DimensionError("parameter, gradient and state counts differ")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape or state.m[i].shape != p.data.shape:
            raise DimensionError(f"shape mismatch for parameter {i}")
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        p.data = p.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


# ---------------------------------------------------------------- training loop


def epoch_streams(seed: int, epoch: int) -> dict[str, np.random.Generator]:
    """Independent per-epoch generators so a run can resume at any epoch."""
    seqs = np.random.SeedSequence([seed, epoch]).spawn(4)
    return dict(zip(("order", "aug", "noise", "repr"), (np.random.default_rng(s) for s in seqs)))


def batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled index batches; the last partial batch is dropped."""
    order = rng.permutation(n)
    if n < batch_size:
        return [order]
    return [order[i:i + batch_size] for i in range(0, n - batch_size + 1, batch_size)]


class Trainer:
    def __init__(
        self,
        encoder: EncoderModel,
        generator: NoiseGenerator | None,
        augset: AugmentationSet,
        settings: TrainSettings,
        lr: float = 1e-3,
        batch_size: int = 256,
        seed: int = 0,
    ):
        self.encoder = encoder
        self.generator = generator
        self.augset = augset
        self.settings = settings
        self.batch_size = batch_size
        self.seed = seed
        self.named = [("theta/" + k, p) for k, p in encoder.named_parameters()]
        if generator is not None:
            self.named += [("psi/" + k, p) for k, p in generator.named_parameters()]
        self.params = [p for _, p in self.named]
        self.state = OptimizerState.for_params(self.params, lr=lr)
        self.epoch = 0
        self.history: list[float] = []

    def step(self, x: np.ndarray, streams: dict, draws=None) -> BatchLoss:
        for p in self.params:
            p.grad = None
        out = batch_loss(
            x, self.encoder, self.generator, self.augset, self.settings,
            streams["aug"], streams["noise"], streams["repr"], draws=draws,
        )
        ad.check_finite(out.loss)
        ad.backward(out.loss)
        adam_step(self.params, [p.grad for p in self.params], self.state)
        return out

    def run_epoch(self, x: np.ndarray) -> float:
        streams = epoch_streams(self.seed, self.epoch)
        losses = [self.step(x[idx], streams).loss.item() for idx in batches(len(x), self.batch_size, streams["order"])]
        mean_loss = float(np.mean(losses))
        self.history.append(mean_loss)
        self.epoch += 1
        log.debug("epoch %d loss %.6f", self.epoch, mean_loss)
        return mean_loss

    def fit(self, x: np.ndarray, epochs: int, callback: Callable[[Trainer], None] | None = None) -> list[float]:
        if len(x) == 0:
            raise ContractError("cannot train on an empty dataset")
        while self.epoch < epochs:
            self.run_epoch(x)
            if callback is not None:
                callback(self)
        return self.history

    # checkpoints: flat key -> array map
    def state_dict(self) -> dict[str, np.ndarray]:
        out = {name: p.data for name, p in self.named}
        for i, (m, v) in enumerate(zip(self.state.m, self.state.v)):
            out[f"adam/m/{i}"] = m
            out[f"adam/v/{i}"] = v
        meta = {"step": self.state.step, "epoch": self.epoch, "history": self.history, "lr": self.state.lr}
        out["meta"] = np.array(json.dumps(meta))
        return out

    def load_state_dict(self, d) -> None:
        for name, p in self.named:
            if name not in d:
                raise ContractError(f"checkpoint lacks {name}")
            arr = np.asarray(d[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise DimensionError(f"checkpoint shape mismatch for {name}")
            p.data = arr.copy()
        for i in range(len(self.params)):
            self.state.m[i] = np.asarray(d[f"adam/m/{i}"], dtype=np.float64).copy()
            self.state.v[i] = np.asarray(d[f"adam/v/{i}"], dtype=np.float64).copy()
        meta = json.loads(str(d["meta"]))
        self.state.step = int(meta["step"])
        self.state.lr = float(meta["lr"])
        self.epoch = int(meta["epoch"])
        self.history = [float(v) for v in meta["history"]]

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            np.savez(fh, **self.state_dict())

    def load(self, path) -> None:
        with np.load(path, allow_pickle=False) as d:
            self.load_state_dict({k: d[k] for k in d.files})
