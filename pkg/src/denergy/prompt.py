"""Differentiable stand-in for prompt tuning.

Learnable context vectors feed a frozen two-layer tanh encoder whose
normalized outputs play the role of text features. The encoder keeps the two
properties the training objective relies on: text features are a smooth
function of the context vectors alone, and they stay unit-norm for any
parameter value. Analytic gradients are validated against the central
finite-difference oracle implemented here.

Weights are drawn from the xorshift64* stream in a fixed order (theta,
class_tokens, w1, b1, w2, b2; each row-major), so initialization is
bit-reproducible from the seed alone.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import InvalidDimension, ShapeMismatch, ZeroNormRow
from .rng import XorShift64Star

_ZERO_NORM = 1e-12


@dataclass(frozen=True)
class PromptParams:
    """Learnable context vectors plus the frozen encoder weights."""

    theta: np.ndarray  # n x d_e, learnable
    class_tokens: np.ndarray  # K x d_e, frozen
    w1: np.ndarray  # h x d_e, frozen
    b1: np.ndarray  # h, frozen
    w2: np.ndarray  # D x h, frozen
    b2: np.ndarray  # D, frozen
    seed: int = 0

    def __post_init__(self):
        for name in ("theta", "class_tokens", "w1", "b1", "w2", "b2"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contains NaN or Inf")
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_ctx(self) -> int:
        return self.theta.shape[0]

    @property
    def d_e(self) -> int:
        return self.theta.shape[1]

    @property
    def num_classes(self) -> int:
        return self.class_tokens.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.w2.shape[0]

    def with_theta(self, theta: np.ndarray) -> "PromptParams":
        if theta.shape != self.theta.shape:
            raise ShapeMismatch(f"theta shape {theta.shape} != {self.theta.shape}")
        return replace(self, theta=theta)


@dataclass(frozen=True)
class TextForwardTrace:
    """Cached intermediates of one text-feature forward pass."""

    pooled: np.ndarray  # K x d_e
    hidden: np.ndarray  # K x h, tanh activations
    pre_norm: np.ndarray  # K x D, features before normalization
    norms: np.ndarray  # K
    features: np.ndarray  # K x D, unit rows


def _fill(rng: XorShift64Star, shape: tuple[int, ...], lo: float, hi: float) -> np.ndarray:
    out = np.empty(shape, dtype=np.float64)
    flat = out.reshape(-1)
    for i in range(flat.shape[0]):
        flat[i] = rng.uniform_in(lo, hi)
    return out


def init_params(
    seed: int, n: int = 4, d_e: int = 16, h: int = 32, D: int = 64, K: int = 10
) -> PromptParams:
    """Random-initialize context vectors and the frozen encoder.

    Context vectors are uniform in (-0.1, 0.1); frozen weights are uniform
    in (-1/sqrt(fan_in), 1/sqrt(fan_in)).
    """
    for name, value in (("n", n), ("d_e", d_e), ("h", h), ("D", D), ("K", K)):
        if value < 1:
            raise InvalidDimension(f"{name} must be >= 1, got {value}")
    rng = XorShift64Star(seed)
    theta = _fill(rng, (n, d_e), -0.1, 0.1)
    bound_e = 1.0 / np.sqrt(d_e)
    class_tokens = _fill(rng, (K, d_e), -bound_e, bound_e)
    w1 = _fill(rng, (h, d_e), -bound_e, bound_e)
    b1 = _fill(rng, (h,), -bound_e, bound_e)
    bound_h = 1.0 / np.sqrt(h)
    w2 = _fill(rng, (D, h), -bound_h, bound_h)
    b2 = _fill(rng, (D,), -bound_h, bound_h)
    return PromptParams(theta, class_tokens, w1, b1, w2, b2, seed=seed)


def forward_text_features(params: PromptParams) -> TextForwardTrace:
    """Pool context vectors with each class token and encode to unit rows.

    pooled_j = (sum_i theta_i + class_token_j) / (n + 1)
    feature_j = normalize(w2 tanh(w1 pooled_j + b1) + b2)
    """
    n = params.n_ctx
    ctx_sum = params.theta.sum(axis=0)
    pooled = (params.class_tokens + ctx_sum) / (n + 1)
    hidden = np.tanh(pooled @ params.w1.T + params.b1)
    pre_norm = hidden @ params.w2.T + params.b2
    norms = np.linalg.norm(pre_norm, axis=1)
    bad = np.flatnonzero(norms <= _ZERO_NORM)
    if bad.size:
        raise ZeroNormRow(int(bad[0]))
    features = pre_norm / norms[:, None]
    return TextForwardTrace(pooled=pooled, hidden=hidden, pre_norm=pre_norm, norms=norms, features=features)


def backward(
    params: PromptParams, trace: TextForwardTrace, feature_grads: np.ndarray
) -> np.ndarray:
    """Pull dL/d(features) back to dL/d(theta).

    Applies the normalization Jacobian (I - f f^T)/||v|| per class, the tanh
    derivative, both affine transposes, and the 1/(n+1) pooling factor
    broadcast to all context rows (mean pooling gives every row the same
    gradient).
    """
    feature_grads = np.asarray(feature_grads, dtype=np.float64)
    if feature_grads.shape != trace.features.shape:
        raise ShapeMismatch(
            f"feature_grads shape {feature_grads.shape} != {trace.features.shape}"
        )
    f = trace.features
    radial = (feature_grads * f).sum(axis=1, keepdims=True)
    g_pre = (feature_grads - radial * f) / trace.norms[:, None]
    g_hidden = g_pre @ params.w2
    g_act = g_hidden * (1.0 - trace.hidden**2)
    g_pooled = g_act @ params.w1
    g_ctx = g_pooled.sum(axis=0) / (params.n_ctx + 1)
    return np.tile(g_ctx, (params.n_ctx, 1))


def finite_diff_grad(
    params: PromptParams, loss_fn: Callable[[PromptParams], float], step: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar loss w.r.t. theta.

    The oracle against which :func:`backward` is validated; it never calls
    the analytic path.
    """
    if step <= 0:
        raise ValueError("step must be > 0")
    grad = np.zeros_like(params.theta)
    base = params.theta
    for i in range(base.shape[0]):
        for j in range(base.shape[1]):
            plus = base.copy()
            plus[i, j] += step
            minus = base.copy()
            minus[i, j] -= step
            grad[i, j] = (
                loss_fn(params.with_theta(plus)) - loss_fn(params.with_theta(minus))
            ) / (2.0 * step)
    return grad
