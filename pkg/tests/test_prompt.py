"""Prompt model: deterministic init, forward contract, gradient correctness."""

import numpy as np
import pytest

from denergy.errors import InvalidDimension, ShapeMismatch
from denergy.prompt import (
    PromptParams,
    backward,
    finite_diff_grad,
    forward_text_features,
    init_params,
)


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.abs(a).max(), np.abs(b).max(), 1e-12)
    return float(np.abs(a - b).max()) / scale


class TestInitParams:
    def test_deterministic(self):
        a = init_params(123)
        b = init_params(123)
        for name in ("theta", "class_tokens", "w1", "b1", "w2", "b2"):
            assert np.array_equal(getattr(a, name), getattr(b, name)), name

    def test_seed_changes_theta(self):
        assert not np.array_equal(init_params(1).theta, init_params(2).theta)

    def test_ranges(self):
        p = init_params(9, n=8, d_e=16, h=32, D=64, K=10)
        assert np.abs(p.theta).max() <= 0.1
        assert np.abs(p.class_tokens).max() <= 1 / np.sqrt(16)
        assert np.abs(p.w2).max() <= 1 / np.sqrt(32)

    @pytest.mark.parametrize("bad", [dict(n=0), dict(d_e=0), dict(h=0), dict(D=0), dict(K=0)])
    def test_invalid_dimension(self, bad):
        with pytest.raises(InvalidDimension):
            init_params(0, **bad)


class TestForward:
    def test_zero_theta_zero_token_reduction(self):
        base = init_params(5, n=2, d_e=4, h=6, D=8, K=1)
        params = PromptParams(
            theta=np.zeros((2, 4)),
            class_tokens=np.zeros((1, 4)),
            w1=base.w1,
            b1=base.b1,
            w2=base.w2,
            b2=base.b2,
        )
        trace = forward_text_features(params)
        np.testing.assert_array_equal(trace.pooled, np.zeros((1, 4)))
        v = base.w2 @ np.tanh(base.b1) + base.b2
        np.testing.assert_allclose(trace.pre_norm[0], v, rtol=0, atol=1e-15)
        np.testing.assert_allclose(trace.features[0], v / np.linalg.norm(v), atol=1e-15)

    def test_pooling_is_linear_in_theta(self):
        params = init_params(6, n=3, d_e=5, h=7, D=9, K=4)
        doubled = params.with_theta(2.0 * params.theta)
        u1 = forward_text_features(params).pooled
        u2 = forward_text_features(doubled).pooled
        expected = params.theta.sum(axis=0) / (params.n_ctx + 1)
        np.testing.assert_allclose(u2 - u1, np.tile(expected, (4, 1)), atol=1e-15)

    def test_unit_norm_features(self):
        for seed in range(10):
            trace = forward_text_features(init_params(seed))
            np.testing.assert_allclose(
                np.linalg.norm(trace.features, axis=1), 1.0, atol=1e-9
            )

    def test_bit_reproducible(self):
        a = forward_text_features(init_params(77))
        b = forward_text_features(init_params(77))
        assert np.array_equal(a.features, b.features)


class TestBackward:
    def test_zero_upstream(self):
        params = init_params(8)
        trace = forward_text_features(params)
        grad = backward(params, trace, np.zeros_like(trace.features))
        np.testing.assert_array_equal(grad, np.zeros_like(params.theta))

    def test_radial_gradients_annihilated(self):
        params = init_params(9)
        trace = forward_text_features(params)
        grad = backward(params, trace, trace.features.copy())
        np.testing.assert_allclose(grad, 0.0, atol=1e-12)

    def test_shape_mismatch(self):
        params = init_params(10)
        trace = forward_text_features(params)
        with pytest.raises(ShapeMismatch):
            backward(params, trace, np.zeros((1, 2)))

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(31)
        for seed in range(5):
            params = init_params(seed, n=2, d_e=6, h=8, D=10, K=3)
            upstream = rng.normal(size=(3, 10))

            def loss_fn(p):
                trace = forward_text_features(p)
                return float((trace.features * upstream).sum())

            trace = forward_text_features(params)
            analytic = backward(params, trace, upstream)
            numeric = finite_diff_grad(params, loss_fn, step=1e-5)
            assert relative_error(analytic, numeric) < 1e-6


class TestFiniteDiffGrad:
    def test_constant_loss(self):
        params = init_params(11, n=2, d_e=3, h=4, D=5, K=2)
        grad = finite_diff_grad(params, lambda p: 1.5, step=1e-5)
        np.testing.assert_array_equal(grad, np.zeros((2, 3)))

    def test_quadratic(self):
        params = init_params(12, n=2, d_e=3, h=4, D=5, K=2)
        grad = finite_diff_grad(params, lambda p: float((p.theta**2).sum()), step=1e-5)
        np.testing.assert_allclose(grad, 2 * params.theta, atol=1e-9)

    def test_rejects_bad_step(self):
        params = init_params(13)
        with pytest.raises(ValueError):
            finite_diff_grad(params, lambda p: 0.0, step=0.0)
