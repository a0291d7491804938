"""Bound-maximization fine-tuning of the prompt context vectors.

The objective is cross-entropy plus ``lambda0 * exp(L_dE)``, where ``L_dE``
is the mean energy gap between top-p-masked and original image features.
Minimizing the exponential term raises the lower bound of the energy-change
OOD score for the training classes while pushing the masked and unmasked
domains toward consistent curvature.

Masks and top-1 text picks are recomputed on every forward pass; gradients
treat the selected masks as constants (the selection is piecewise constant
in the parameters).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import FeatureMatrix, SimilarityRow, log_sum_exp_rows, similarity_row
from .errors import InvalidConfig, LabelOutOfRange, NonFiniteLoss
from .masking import top_p_mask
from .metrics import accuracy
from .prompt import PromptParams, backward, forward_text_features
from .rng import XorShift64Star
from .scores import ScoreConfig, delta_energy


@dataclass(frozen=True)
class EbmConfig:
    """Training knobs: loss weight, mask retention, temperature, schedule.

    ``ce_tau`` overrides the cross-entropy temperature; by default the
    cross-entropy shares ``tau`` with the energies.
    """

    lambda0: float = 0.5
    p: float = 0.5
    tau: float = 0.01
    lr: float = 0.002
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0
    ce_tau: float | None = None

    def __post_init__(self):
        if self.lambda0 < 0:
            raise InvalidConfig("lambda0 must be >= 0")
        if not (0 < self.p <= 1):
            raise InvalidConfig("p must be in (0, 1]")
        if not (self.tau > 0):
            raise InvalidConfig("tau must be > 0")
        if not (self.lr > 0):
            raise InvalidConfig("lr must be > 0")
        if self.epochs < 0:
            raise InvalidConfig("epochs must be >= 0")
        if self.batch_size < 1:
            raise InvalidConfig("batch_size must be >= 1")
        if self.ce_tau is not None and not (self.ce_tau > 0):
            raise InvalidConfig("ce_tau must be > 0")

    @property
    def effective_ce_tau(self) -> float:
        return self.tau if self.ce_tau is None else self.ce_tau


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    l_ce: float
    l_delta_e: float
    l_ebm: float
    accuracy: float
    mean_delta_energy: float
    condition_rate: float


@dataclass(frozen=True)
class TrainReport:
    """Per-epoch losses plus the per-epoch rate of condition-satisfying batches."""

    records: list[EpochRecord] = field(default_factory=list)

    @property
    def final(self) -> EpochRecord:
        if not self.records:
            raise ValueError("no epochs were run")
        return self.records[-1]


@dataclass(frozen=True)
class EbmLossResult:
    total: float
    l_ce: float
    l_delta_e: float
    theta_grad: np.ndarray


@dataclass(frozen=True)
class ConditionCheck:
    """Per-sample and batch-level outcome of the bound condition."""

    per_sample: np.ndarray
    holds: bool


def _softmax_rows(scaled: np.ndarray) -> np.ndarray:
    shifted = scaled - scaled.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _check_labels(labels: np.ndarray, k: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise LabelOutOfRange(f"labels must lie in [0, {k})")
    return labels


def cross_entropy_loss(
    sims: list[SimilarityRow],
    labels,
    tau: float,
    images: FeatureMatrix,
) -> tuple[float, np.ndarray]:
    """Mean -log softmax(s/tau)[label] and its gradient w.r.t. text features.

    The image features are needed to push similarity gradients back onto the
    K x D text-feature matrix.
    """
    n = len(sims)
    if n == 0 or images.rows != n:
        raise InvalidConfig("need one similarity row per image row")
    labels = _check_labels(labels, sims[0].num_classes)
    if labels.size != n:
        raise LabelOutOfRange(f"{labels.size} labels for {n} rows")
    s = np.stack([sim.values for sim in sims]) / tau
    lse = log_sum_exp_rows(s)
    loss = float(np.mean(lse - s[np.arange(n), labels]))
    probs = _softmax_rows(s)
    probs[np.arange(n), labels] -= 1.0
    feature_grads = (probs / (n * tau)).T @ images.data
    return loss, feature_grads


def _masked_images(image_data: np.ndarray, features: np.ndarray, p: float) -> np.ndarray:
    """Top-p mask every image against its current top-1 text feature."""
    sims = image_data @ features.T
    top1 = np.argsort(-sims, kind="stable")[:, 0]
    masked = np.empty_like(image_data)
    for i in range(image_data.shape[0]):
        _, masked[i] = top_p_mask(image_data[i], features[top1[i]], p)
    return masked


def _l_delta_e_parts(
    image_data: np.ndarray, features: np.ndarray, cfg: EbmConfig
) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss, text-feature gradient, and per-sample energy gaps."""
    n = image_data.shape[0]
    masked = _masked_images(image_data, features, cfg.p)
    s0 = image_data @ features.T / cfg.tau
    s2 = masked @ features.T / cfg.tau
    e0 = -log_sum_exp_rows(s0)
    e2 = -log_sum_exp_rows(s2)
    gaps = e2 - e0
    loss = float(np.mean(gaps))
    p0 = _softmax_rows(s0)
    p2 = _softmax_rows(s2)
    feature_grads = (p0.T @ image_data - p2.T @ masked) / (n * cfg.tau)
    return loss, feature_grads, gaps


def l_delta_e(
    images: FeatureMatrix, params: PromptParams, cfg: EbmConfig
) -> tuple[float, np.ndarray]:
    """Mean masked-vs-original energy gap and its text-feature gradient.

    For each sample the mask retains the top-p proportion of the product
    between the image feature and its current top-1 text feature; gradients
    flow through both energies' dependence on the text features while the
    mask itself is held constant.
    """
    if not images.normalized:
        raise ValueError("l_delta_e expects normalized image features")
    features = forward_text_features(params).features
    loss, grads, _ = _l_delta_e_parts(images.data, features, cfg)
    return loss, grads


def ebm_loss(
    images: FeatureMatrix, labels, params: PromptParams, cfg: EbmConfig
) -> EbmLossResult:
    """Total objective CE + lambda0 * exp(L_dE) and its theta gradient."""
    trace = forward_text_features(params)
    sims = [
        similarity_row(row, source_index=i)
        for i, row in enumerate(images.data @ trace.features.T)
    ]
    ce, g_ce = cross_entropy_loss(sims, labels, cfg.effective_ce_tau, images)
    lde, g_lde, _ = _l_delta_e_parts(images.data, trace.features, cfg)
    total = ce + cfg.lambda0 * math.exp(lde)
    feature_grads = g_ce + cfg.lambda0 * math.exp(lde) * g_lde
    theta_grad = backward(params, trace, feature_grads)
    return EbmLossResult(total=total, l_ce=ce, l_delta_e=lde, theta_grad=theta_grad)


def _log_expm1(x: float) -> float:
    """log(e^x - 1) for x > 0 without overflow."""
    return x + math.log1p(-math.exp(-x))


def _signed_sum(terms: list[tuple[int, float]]) -> tuple[int, float]:
    """Sum of sign * e^log_abs terms, returned in the same representation."""
    finite = [(s, l) for s, l in terms if s != 0 and l != -math.inf]
    if not finite:
        return 0, -math.inf
    m = max(l for _, l in finite)
    acc = 0.0
    for s, l in finite:
        acc += s * math.exp(l - m)
    if acc == 0.0:
        return 0, -math.inf
    return (1 if acc > 0 else -1), m + math.log(abs(acc))


def _signed_geq(a: tuple[int, float], b: tuple[int, float]) -> bool:
    """a >= b for signed-log representations."""
    sa, la = a
    sb, lb = b
    if sa != sb:
        return sa > sb
    if sa == 0:
        return True
    if sa > 0:
        return la >= lb
    return la <= lb


def bound_condition(
    top1_scaled: np.ndarray, masked_lse: np.ndarray, eps_e: float
) -> ConditionCheck:
    """Bound condition from temperature-scaled top-1 similarities and masked energies.

    ``top1_scaled`` holds s1/tau per sample and ``masked_lse`` the log-sum-exp
    of the masked similarities over tau (i.e. -E2). Per sample the condition
    is ``e^{s1/tau} - 1 >= (e^{eps_e} - 1) * e^{-E2}``; the batch condition
    compares the two sums. Everything is evaluated in a signed log-space
    representation so no intermediate exponential overflows.
    """
    top1_scaled = np.asarray(top1_scaled, dtype=np.float64).ravel()
    masked_lse = np.asarray(masked_lse, dtype=np.float64).ravel()
    if top1_scaled.shape != masked_lse.shape:
        raise InvalidConfig("top1_scaled and masked_lse must have equal length")

    if eps_e > 0:
        right_repr = [(1, _log_expm1(eps_e) + l) for l in masked_lse]
    elif eps_e == 0:
        right_repr = [(0, -math.inf) for _ in masked_lse]
    else:
        right_repr = [(-1, math.log(-math.expm1(eps_e)) + l) for l in masked_lse]

    left_repr: list[tuple[int, float]] = []
    for a in top1_scaled:
        if a > 0:
            left_repr.append((1, _log_expm1(a)))
        elif a == 0:
            left_repr.append((0, -math.inf))
        else:
            left_repr.append((-1, math.log1p(-math.exp(a))))

    per_sample = np.array(
        [_signed_geq(l, r) for l, r in zip(left_repr, right_repr)], dtype=bool
    )
    holds = bool(_signed_geq(_signed_sum(left_repr), _signed_sum(right_repr)))
    return ConditionCheck(per_sample=per_sample, holds=holds)


def check_thm3_condition(
    images: FeatureMatrix, params: PromptParams, cfg: EbmConfig, eps_e: float
) -> ConditionCheck:
    """Evaluate the bound condition for a batch under the current parameters."""
    features = forward_text_features(params).features
    s0 = images.data @ features.T / cfg.tau
    masked = _masked_images(images.data, features, cfg.p)
    lse2 = log_sum_exp_rows(masked @ features.T / cfg.tau)
    return bound_condition(s0.max(axis=1), lse2, eps_e)


def _epoch_snapshot(
    images: FeatureMatrix,
    labels: np.ndarray,
    params: PromptParams,
    cfg: EbmConfig,
    epoch: int,
    condition_rate: float,
) -> EpochRecord:
    res = ebm_loss(images, labels, params, cfg)
    recomposed = res.l_ce + cfg.lambda0 * math.exp(res.l_delta_e)
    if abs(res.total - recomposed) > 1e-12:
        raise AssertionError("loss recomposition drifted beyond 1e-12")
    features = forward_text_features(params).features
    sims = [
        similarity_row(row, source_index=i)
        for i, row in enumerate(images.data @ features.T)
    ]
    score_cfg = ScoreConfig(tau=cfg.tau, c=1)
    mean_delta = float(np.mean([delta_energy(sim, score_cfg).delta for sim in sims]))
    return EpochRecord(
        epoch=epoch,
        l_ce=res.l_ce,
        l_delta_e=res.l_delta_e,
        l_ebm=res.total,
        accuracy=accuracy(sims, labels),
        mean_delta_energy=mean_delta,
        condition_rate=condition_rate,
    )


def train(
    images: FeatureMatrix, labels, params: PromptParams, cfg: EbmConfig
) -> tuple[PromptParams, TrainReport]:
    """Plain gradient descent over shuffled mini-batches.

    Masks are rebuilt on every forward pass. The per-batch condition check
    uses the running maximum of batch ``L_dE`` values as its bound. Raises
    NonFiniteLoss with the offending epoch/batch if any loss diverges.
    """
    labels = _check_labels(np.asarray(labels), params.num_classes)
    if labels.size != images.rows:
        raise LabelOutOfRange(f"{labels.size} labels for {images.rows} image rows")
    missing = set(range(params.num_classes)) - set(labels.tolist())
    if missing:
        warnings.warn(f"classes without training samples: {sorted(missing)}", stacklevel=2)

    rng = XorShift64Star(cfg.seed)
    indices = list(range(images.rows))
    records: list[EpochRecord] = []
    running_eps = -math.inf
    for epoch in range(cfg.epochs):
        rng.shuffle(indices)
        holds = 0
        batches = 0
        for start in range(0, len(indices), cfg.batch_size):
            batch_idx = indices[start : start + cfg.batch_size]
            batch_images = FeatureMatrix(images.data[batch_idx], normalized=images.normalized)
            batch_labels = labels[batch_idx]
            res = ebm_loss(batch_images, batch_labels, params, cfg)
            if not (
                math.isfinite(res.total) and np.isfinite(res.theta_grad).all()
            ):
                raise NonFiniteLoss(
                    f"non-finite loss at epoch {epoch} batch {batches}: "
                    f"total={res.total} ce={res.l_ce} l_delta_e={res.l_delta_e}"
                )
            running_eps = max(running_eps, res.l_delta_e)
            check = check_thm3_condition(batch_images, params, cfg, running_eps)
            holds += int(check.holds)
            batches += 1
            params = params.with_theta(params.theta - cfg.lr * res.theta_grad)
        rate = holds / batches if batches else 0.0
        records.append(_epoch_snapshot(images, labels, params, cfg, epoch, rate))
    return params, TrainReport(records=records)
