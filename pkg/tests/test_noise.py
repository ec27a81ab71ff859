import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pinda import autodiff as ad
from pinda.autodiff import ContractError, Tensor
from pinda.noise import (
    NORM_DELTA,
    SIGMA_FLOOR,
    NoiseGenerator,
    NoiseParams,
    norm_penalty,
    sample_noise,
    sample_reproducibility,
)
from pinda.nn import parameters


def small(kind, seed=0, d=3, **kw):
    return NoiseGenerator(d, kind, np.random.default_rng(seed), hidden=(6,), **kw)


class TestGeneratorForward:
    def test_zero_heads_give_softplus_zero(self):
        gen = small("gaussian_zero_mean", zero_init_heads=True)
        sigma = gen(np.random.default_rng(1).standard_normal((4, 3))).sigma.data
        np.testing.assert_allclose(sigma, math.log(2.0) + 1e-6, rtol=1e-15)

    @pytest.mark.parametrize("kind", ["gaussian_zero_mean", "uniform", "dirac"])
    def test_zero_mean_kinds_have_no_mean_head(self, kind):
        gen = small(kind)
        assert gen(np.ones((2, 3))).mu is None
        assert not any("head_mu" in name for name, _ in gen.named_parameters())

    def test_learned_mean_has_mean_head(self):
        gen = small("gaussian_learned_mean")
        assert gen(np.ones((2, 3))).mu.shape == (2, 3)
        assert any(name.startswith("head_mu") for name, _ in gen.named_parameters())

    def test_identical_inputs_identical_parameters(self):
        gen = small("gaussian_learned_mean")
        p = gen(np.tile([0.5, -1.0, 2.0], (2, 1)))
        np.testing.assert_array_equal(p.sigma.data[0], p.sigma.data[1])
        np.testing.assert_array_equal(p.mu.data[0], p.mu.data[1])

    def test_dimension_mismatch(self):
        with pytest.raises(ContractError):
            small("uniform")(np.ones((2, 4)))

    def test_unknown_kind(self):
        with pytest.raises(ContractError):
            NoiseGenerator(3, "laplace", np.random.default_rng(0))

    def test_default_widths(self):
        gen = NoiseGenerator(5, "gaussian_zero_mean", np.random.default_rng(0))
        assert gen.trunk.widths == [5, 1024, 1024]
        assert gen.heads["sigma"].weight.shape == (1024, 5)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), scale=st.floats(0.1, 100.0))
    def test_scale_parameters_respect_floors(self, seed, scale):
        rng = np.random.default_rng(seed)
        x = scale * rng.standard_normal((5, 3))
        gauss = small("gaussian_learned_mean", seed)(x)
        assert np.all(gauss.sigma.data >= SIGMA_FLOOR)
        assert np.all(small("uniform", seed)(x).u.data >= 0.0)


class TestSampleNoise:
    def test_gaussian_example(self):
        params = NoiseParams("gaussian_learned_mean", mu=Tensor([1.0, 1.0]), sigma=Tensor([0.5, 0.5]))
        eps = sample_noise(params, np.array([1.0, 1.0])).epsilon.data
        np.testing.assert_array_equal(eps, [1.5, 1.5])

    def test_uniform_example(self):
        eps = sample_noise(NoiseParams("uniform", u=Tensor([2.0])), np.array([0.75])).epsilon.data
        assert eps[0] == pytest.approx(1.0, abs=1e-15)

    def test_uniform_zero_width(self):
        eps = sample_noise(NoiseParams("uniform", u=Tensor([0.0, 0.0])), np.array([0.1, 0.9])).epsilon.data
        np.testing.assert_array_equal(eps, [0.0, 0.0])

    def test_mismatched_parameters(self):
        with pytest.raises(ContractError):
            sample_noise(NoiseParams("gaussian_learned_mean", sigma=Tensor([1.0])), np.zeros(1))
        with pytest.raises(ContractError):
            sample_noise(NoiseParams("uniform", sigma=Tensor([1.0])), np.zeros(1))

    def test_dirac_is_fixed_offset(self):
        gen = NoiseGenerator(2, "dirac", epsilon0=[0.5, -1.0])
        a = gen.sample(np.zeros((3, 2)), np.random.default_rng(0)).epsilon.data
        b = gen.sample(np.ones((3, 2)), np.random.default_rng(99)).epsilon.data
        np.testing.assert_array_equal(a, np.tile([0.5, -1.0], (3, 1)))
        np.testing.assert_array_equal(a, b)

    def test_dirac_consumes_no_randomness(self):
        rng = np.random.default_rng(5)
        NoiseGenerator(2, "dirac").sample(np.zeros((3, 2)), rng)
        assert rng.random() == np.random.default_rng(5).random()

    def test_empirical_gaussian_moments(self):
        sigma = np.array([0.5, 2.0])
        mu = np.array([1.0, -3.0])
        rng = np.random.default_rng(0)
        params = NoiseParams("gaussian_learned_mean", mu=Tensor(mu), sigma=Tensor(sigma))
        draws = sample_noise(params, rng.standard_normal((10_000, 2))).epsilon.data
        assert np.all(np.abs(draws.mean(axis=0) - mu) <= 4 * sigma / 100)

    def test_empirical_uniform_moments(self):
        u = np.array([0.5, 3.0])
        rng = np.random.default_rng(1)
        draws = sample_noise(NoiseParams("uniform", u=Tensor(u)), rng.uniform(size=(10_000, 2))).epsilon.data
        assert np.all(np.abs(draws) <= u)
        np.testing.assert_allclose(draws.var(axis=0), u**2 / 3, rtol=0.05)


class TestReparameterisationGradients:
    @pytest.mark.parametrize("kind", ["gaussian_zero_mean", "gaussian_learned_mean", "uniform"])
    def test_square_norm_gradient(self, kind):
        gen = small(kind, 3)
        x = np.random.default_rng(4).standard_normal((4, 3))
        base = gen.draw_base(x.shape, np.random.default_rng(7))

        def loss():
            eps = sample_noise(gen(x), base).epsilon
            return ad.tsum(eps * eps)

        assert ad.gradcheck(loss, parameters(gen)) <= 1e-4

    def test_gaussian_scale_gradient_closed_form(self):
        sigma = Tensor([0.5, 2.0], requires_grad=True)
        draw = np.array([0.3, -1.2])
        eps = sample_noise(NoiseParams("gaussian_zero_mean", sigma=sigma), draw).epsilon
        ad.backward(ad.tsum(eps * eps))
        # d/dsigma (sigma * z)^2 = 2 sigma z^2
        np.testing.assert_allclose(sigma.grad, 2 * sigma.data * draw**2, rtol=1e-15)


class TestNormPenalty:
    def test_constant_norm(self):
        assert norm_penalty(Tensor([[2.0, 0.0], [0.0, 2.0]])).item() == pytest.approx(1 / (2 + NORM_DELTA), rel=1e-15)
        assert norm_penalty(Tensor([[2.0, 0.0]])).item() == pytest.approx(0.5, abs=1e-8)

    def test_mixed_norms(self):
        assert norm_penalty(Tensor([[1.0, 0.0], [0.0, 3.0]])).item() == pytest.approx(0.5, abs=1e-8)

    def test_zero_noise(self):
        assert norm_penalty(Tensor(np.zeros((3, 2)))).item() == pytest.approx(1e8, rel=1e-12)

    def test_empty(self):
        with pytest.raises(ContractError):
            norm_penalty([])
        with pytest.raises(ContractError):
            norm_penalty(Tensor(np.zeros((0, 2))))

    def test_list_of_samples(self):
        gen = NoiseGenerator(2, "dirac", epsilon0=[3.0, 4.0])
        samples = [gen.sample(np.zeros((2, 2)), np.random.default_rng(0)) for _ in range(3)]
        assert norm_penalty(samples).item() == pytest.approx(1 / (5 + NORM_DELTA), rel=1e-15)

    def test_gradient(self):
        eps = Tensor(np.random.default_rng(2).standard_normal((5, 3)), requires_grad=True)
        assert ad.gradcheck(lambda: norm_penalty(eps), [eps]) <= 1e-4


class TestReproducibility:
    def test_same_seed_bit_identical(self):
        gen = small("gaussian_learned_mean")
        x = np.random.default_rng(0).standard_normal((4, 3))
        a = sample_reproducibility(gen, x, 17).epsilon.data
        b = sample_reproducibility(gen, x, 17).epsilon.data
        assert a.tobytes() == b.tobytes()

    def test_different_seeds_differ(self):
        gen = small("uniform")
        x = np.random.default_rng(0).standard_normal((4, 3))
        a = sample_reproducibility(gen, x, 1).epsilon.data
        b = sample_reproducibility(gen, x, 2).epsilon.data
        assert not np.array_equal(a, b)
