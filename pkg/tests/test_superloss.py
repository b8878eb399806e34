import math

import numpy as np
import pytest
from scipy.special import lambertw

from tsint.errors import ConfigError, ContractError
from tsint.interactions import observed_masks, pairwise_distances
from tsint.losses import contrastive_loss
from tsint.superloss import (SuperLossState, lambert_w0, superloss_objective,
                             superloss_sigma, superloss_wrap)


def _newton_w(x, w=0.5):
    for _ in range(100):
        w -= (w * math.exp(w) - x) / (math.exp(w) * (w + 1))
    return w


def _grid_argmin(delta, lam):
    sigma = np.linspace(1e-4, 10, 200_001)
    return sigma[np.argmin(delta * sigma + lam * np.log(sigma) ** 2)]


class TestLambertW:
    def test_fixed_points(self):
        assert lambert_w0(0.0) == 0.0
        assert lambert_w0(math.e) == pytest.approx(1.0, abs=1e-15)
        assert lambert_w0(-1 / math.e) == -1.0

    def test_omega_constant(self):
        w = lambert_w0(1.0)
        assert w == pytest.approx(_newton_w(1.0), abs=1e-14)
        assert w == pytest.approx(0.5671432904, abs=1e-10)
        assert abs(w * math.exp(w) - 1.0) <= 1e-15

    def test_back_substitution(self):
        x = np.random.default_rng(0).uniform(-1 / math.e, 10, 1000)
        w = lambert_w0(x)
        assert np.max(np.abs(w * np.exp(w) - x)) <= 1e-12
        assert np.all(w >= -1)

    def test_against_scipy(self):
        x = np.concatenate([np.linspace(-0.3678, 50, 500), [1e3, 1e10, 1e300]])
        np.testing.assert_allclose(lambert_w0(x), lambertw(x).real, rtol=1e-13)

    def test_domain(self):
        with pytest.raises(ContractError):
            lambert_w0(-0.4)
        assert lambert_w0(-1 / math.e - 1e-13) == -1.0


class TestSigma:
    def test_at_threshold(self):
        assert superloss_sigma(0.7, 0.7, 0.3) == 1.0

    def test_clamp_point(self):
        assert superloss_sigma(-2 / math.e, 0.0, 1.0) == pytest.approx(math.e, abs=1e-12)
        # below the clamp the confidence saturates at e
        assert superloss_sigma(-5.0, 0.0, 1.0) == pytest.approx(math.e, abs=1e-12)

    def test_positive_gap(self):
        assert superloss_sigma(2.0, 0.0, 1.0) == pytest.approx(0.56714, abs=1e-5)
        assert superloss_sigma(2.0, 0.0, 1.0) == pytest.approx(_grid_argmin(2.0, 1.0), abs=1e-3)

    def test_monotone_non_increasing(self):
        losses = np.linspace(-3, 5, 100)
        s = superloss_sigma(losses, 0.5, 0.25)
        assert np.all(np.diff(s) <= 0)

    def test_objective_is_minimum(self):
        # negative gaps above the clamp point have a local minimum at sigma*
        for delta in (-0.3, 0.2, 3.0):
            opt = superloss_objective(delta, 0.0, 0.5)
            sigma = np.linspace(0.01, 5, 5000)
            assert opt <= np.min(delta * sigma + 0.5 * np.log(sigma) ** 2) + 1e-12

    def test_lambda_must_be_positive(self):
        with pytest.raises(ConfigError):
            superloss_sigma(1.0, 0.0, 0.0)


def _batch(seed=0, b=8):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((b, 3))
    dist = pairwise_distances(z / np.linalg.norm(z, axis=1, keepdims=True))
    pos, neg = observed_masks(np.repeat(np.arange(b // 2), 2))
    return dist, pos, neg


class TestWrap:
    def test_losses_at_threshold_give_unit_weights(self):
        labels = [0, 0, 1, 1]
        pos, neg = observed_masks(labels)
        dist = np.where(pos, 0.3, 0.2)
        np.fill_diagonal(dist, 0.0)
        state = SuperLossState(lam=0.1, tau_pos=0.3, tau_neg=0.3)
        res, _ = superloss_wrap(dist, pos, neg, state, margin=0.5)
        off = ~np.eye(4, dtype=bool)
        np.testing.assert_allclose(res.sigma[pos & off], 1.0, atol=1e-15)
        np.testing.assert_allclose(res.sigma[neg], 1.0, atol=1e-15)
        plain = contrastive_loss(dist, pos, neg, 0.5, 1)
        assert res.loss.value == pytest.approx(plain.value, abs=1e-15)

    def test_huge_lambda_approaches_plain_loss(self):
        dist, pos, neg = _batch()
        res, _ = superloss_wrap(dist, pos, neg, SuperLossState(lam=1e6))
        plain = contrastive_loss(dist, pos, neg, 0.5, 1)
        assert abs(res.loss.value - plain.value) < 1e-3

    def test_outlier_gets_smallest_weight(self):
        labels = np.repeat(np.arange(3), 3)
        pos, neg = observed_masks(labels)
        dist = np.where(pos, 0.1, 0.9)
        dist[0, 1] = dist[1, 0] = 1.5
        np.fill_diagonal(dist, 0.0)
        res, _ = superloss_wrap(dist, pos, neg, SuperLossState(lam=0.1))
        off = pos & ~np.eye(9, dtype=bool)
        others = res.sigma[off & (dist < 1.0)]
        assert res.sigma[0, 1] < others.min()

    def test_gradient_is_weighted_plain_gradient(self):
        dist, pos, neg = _batch(3)
        res, _ = superloss_wrap(dist, pos, neg, SuperLossState(lam=0.2))
        plain = contrastive_loss(dist, pos, neg, 0.5, 1)
        np.testing.assert_allclose(res.loss.grad, res.sigma * plain.grad, atol=1e-15)

    def test_global_average_threshold(self):
        dist, pos, neg = _batch(1)
        off = pos & ~np.eye(len(dist), dtype=bool)
        state = SuperLossState(lam=0.1, mode="global")
        seen_pos, seen_neg = [], []
        for seed in range(4):
            dist, pos, neg = _batch(seed)
            seen_pos.extend(dist[off])
            seen_neg.extend(np.maximum(0, 0.5 - dist[neg]))
            _, state = superloss_wrap(dist, pos, neg, state)
        assert state.tau_pos == pytest.approx(np.mean(seen_pos), abs=1e-14)
        assert state.tau_neg == pytest.approx(np.mean(seen_neg), abs=1e-14)

    def test_exp_average_threshold(self):
        state = SuperLossState(lam=0.1, mode="exp", smoothing=0.9)
        means = []
        for seed in range(3):
            dist, pos, neg = _batch(seed)
            off = pos & ~np.eye(len(dist), dtype=bool)
            means.append(dist[off].mean())
            _, state = superloss_wrap(dist, pos, neg, state)
        expected = means[0]
        for m in means[1:]:
            expected = 0.9 * expected + 0.1 * m
        assert state.tau_pos == pytest.approx(expected, abs=1e-14)

    def test_bad_mode(self):
        with pytest.raises(ConfigError):
            SuperLossState(mode="fixed")
