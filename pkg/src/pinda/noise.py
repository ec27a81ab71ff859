"""Learnable per-sample noise distributions and their reparameterised samples."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from pinda import autodiff as ad
from pinda.autodiff import ContractError, DimensionError, Tensor
from pinda.nn import MLP, Linear

KINDS = ("gaussian_zero_mean", "gaussian_learned_mean", "uniform", "dirac")
SIGMA_FLOOR = 1e-6
NORM_DELTA = 1e-8


@dataclass
class NoiseParams:
    kind: str
    mu: Tensor | None = None
    sigma: Tensor | None = None
    u: Tensor | None = None
    epsilon0: Tensor | None = None


@dataclass
class NoiseSample:
    epsilon: Tensor
    base_draw: np.ndarray | None


class NoiseGenerator:
    """Shared ReLU trunk with one linear head per distribution parameter.

    Heads emit raw values; the scale heads pass through softplus (plus
    ``sigma_floor`` for the Gaussian scale).  The ``dirac`` kind has no
    network and always returns the fixed offset ``epsilon0``.
    """

    def __init__(
        self,
        input_dim: int,
        kind: str,
        rng: np.random.Generator | None = None,
        hidden: Sequence[int] = (1024, 1024),
        sigma_floor: float = SIGMA_FLOOR,
        epsilon0=None,
        zero_init_heads: bool = False,
    ):
        if kind not in KINDS:
            raise ContractError(f"unknown noise kind {kind!r}")
        self.input_dim = input_dim
        self.kind = kind
        self.sigma_floor = sigma_floor
        self.trunk = None
        self.heads: dict[str, Linear] = {}
        self.epsilon0 = None
        if kind == "dirac":
            eps0 = np.zeros(input_dim) if epsilon0 is None else np.asarray(epsilon0, dtype=np.float64)
            if eps0.shape != (input_dim,):
                raise DimensionError(f"epsilon0 must have shape ({input_dim},)")
            self.epsilon0 = Tensor(eps0)
            return
        if rng is None:
            raise ContractError("a learnable generator needs an initialisation rng")
        self.trunk = MLP([input_dim, *hidden], rng)
        width = hidden[-1] if hidden else input_dim
        names = {"gaussian_zero_mean": ("sigma",), "gaussian_learned_mean": ("mu", "sigma"), "uniform": ("u",)}
        for name in names[kind]:
            self.heads[name] = Linear(width, input_dim, rng, zero=zero_init_heads)

    def named_parameters(self):
        if self.trunk is not None:
            yield from self.trunk.named_parameters("trunk")
        for name, head in self.heads.items():
            yield from head.named_parameters(f"head_{name}")

    def forward(self, x) -> NoiseParams:
        x = ad.as_tensor(x)
        if x.shape[-1] != self.input_dim:
            raise ContractError(f"generator expects {self.input_dim} features, got {x.shape[-1]}")
        if self.kind == "dirac":
            return NoiseParams(self.kind, epsilon0=self.epsilon0)
        feats = ad.relu(self.trunk(x)) if self.trunk.layers else x
        params = NoiseParams(self.kind)
        if "mu" in self.heads:
            params.mu = self.heads["mu"](feats)
        if "sigma" in self.heads:
            params.sigma = ad.softplus(self.heads["sigma"](feats)) + self.sigma_floor
        if "u" in self.heads:
            params.u = ad.softplus(self.heads["u"](feats))
        return params

    __call__ = forward

    def draw_base(self, shape, rng: np.random.Generator) -> np.ndarray | None:
        return draw_base(self.kind, shape, rng)

    def sample(self, x, rng: np.random.Generator) -> NoiseSample:
        x = ad.as_tensor(x)
        return sample_noise(self.forward(x), self.draw_base(x.shape, rng), shape=x.shape)


def draw_base(kind: str, shape, rng: np.random.Generator) -> np.ndarray | None:
    if kind in ("gaussian_zero_mean", "gaussian_learned_mean"):
        return rng.standard_normal(shape)
    if kind == "uniform":
        return rng.uniform(0.0, 1.0, size=shape)
    if kind == "dirac":
        return None
    raise ContractError(f"unknown noise kind {kind!r}")


def sample_noise(params: NoiseParams, base_draw: np.ndarray | None, shape=None) -> NoiseSample:
    """Reparameterised sample: ``mu + draw * sigma`` or ``(2 * draw - 1) * u``."""
    kind = params.kind
    if kind in ("gaussian_zero_mean", "gaussian_learned_mean"):
        if params.sigma is None or (kind == "gaussian_learned_mean") != (params.mu is not None):
            raise ContractError(f"parameters do not match kind {kind!r}")
        eps = params.sigma * base_draw
        if params.mu is not None:
            eps = params.mu + eps
    elif kind == "uniform":
        if params.u is None:
            raise ContractError("uniform noise needs u")
        eps = (2.0 * np.asarray(base_draw) - 1.0) * params.u
    elif kind == "dirac":
        if params.epsilon0 is None:
            raise ContractError("dirac noise needs epsilon0")
        target = params.epsilon0.shape if shape is None else tuple(shape)
        eps = Tensor(np.broadcast_to(params.epsilon0.data, target).copy())
    else:
        raise ContractError(f"unknown noise kind {kind!r}")
    return NoiseSample(eps, base_draw)


def norm_penalty(noise, delta: float = NORM_DELTA) -> Tensor:
    """``1 / (mean L2 norm of the noise vectors + delta)``.

    ``noise`` is an (n, d) tensor or a list of :class:`NoiseSample`.
    """
    if isinstance(noise, (list, tuple)):
        if not noise:
            raise ContractError("norm penalty of an empty noise batch")
        rows = [ad.reshape(s.epsilon, (-1, s.epsilon.shape[-1])) for s in noise]
        noise = ad.concat(rows, axis=0)
    noise = ad.as_tensor(noise)
    if noise.ndim == 1:
        noise = ad.reshape(noise, (1, -1))
    if noise.shape[0] == 0:
        raise ContractError("norm penalty of an empty noise batch")
    return 1.0 / (ad.mean(ad.l2_norm(noise, axis=1)) + delta)


def sample_reproducibility(gen: NoiseGenerator, x, seed: int) -> NoiseSample:
    """Sample with a fresh generator seeded by ``seed``; bit-identical on repeat."""
    return gen.sample(x, np.random.default_rng(seed))
