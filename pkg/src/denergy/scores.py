"""OOD scoring functions over image-text cosine similarities.

The primary score is the energy change observed when the top-c cosine
similarities of a sample are reset to zero: in-distribution samples sit close
to one text embedding, so deleting that alignment moves their energy much
more than it moves an outlier's. Baselines (MCM, MSP, MaxLogit, Energy, a
ReAct-style variant, and temperature-only ODIN) share the orientation
convention that larger scores mean more ID-like.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import FeatureMatrix, SimilarityRow, log_sum_exp
from .errors import DimMismatch, InvalidConfig

BASELINE_METHODS = ("msp", "maxlogit", "energy", "react", "odin")
ALL_METHODS = ("delta-energy", "mcm") + BASELINE_METHODS


@dataclass(frozen=True)
class ScoreConfig:
    """Scoring knobs: temperature, re-alignment count, baseline settings."""

    tau: float = 0.01
    c: int = 2
    react_percentile: float = 0.9
    msp_tau: float = 1.0

    def __post_init__(self):
        if not (self.tau > 0):
            raise InvalidConfig("tau must be > 0")
        if self.c < 1:
            raise InvalidConfig("c must be >= 1")
        if not (0 < self.react_percentile < 1):
            raise InvalidConfig("react_percentile must be in (0, 1)")
        if not (self.msp_tau > 0):
            raise InvalidConfig("msp_tau must be > 0")


@dataclass(frozen=True)
class ScoreBreakdown:
    """Energy before/after re-alignment and their difference.

    ``delta_top`` holds the per-j re-alignment gaps, i.e. the top-c
    similarity values themselves (the reset target is zero).
    """

    e0: float
    e1: float
    delta: float
    delta_top: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _check_c(sim: SimilarityRow, cfg: ScoreConfig) -> None:
    if cfg.c > sim.num_classes:
        raise InvalidConfig(f"c={cfg.c} exceeds class count K={sim.num_classes}")


def energy_before(sim: SimilarityRow, cfg: ScoreConfig) -> float:
    """Energy of the unmodified similarities: -log sum_j exp(s_j / tau)."""
    return -log_sum_exp(sim.values / cfg.tau)


def energy_after_realign(sim: SimilarityRow, cfg: ScoreConfig) -> float:
    """Mean energy over c re-alignments, each zeroing one top similarity.

    For the j-th term only the j-th largest similarity is reset to 0; all
    other entries (including the remaining top-c ones) keep their original
    values.
    """
    _check_c(sim, cfg)
    scaled = sim.values / cfg.tau
    total = 0.0
    for j in range(cfg.c):
        modified = scaled.copy()
        modified[sim.order[j]] = 0.0
        total += log_sum_exp(modified)
    return -total / cfg.c


def delta_energy(sim: SimilarityRow, cfg: ScoreConfig) -> ScoreBreakdown:
    """Energy change caused by resetting the top-c similarities to zero."""
    _check_c(sim, cfg)
    e0 = energy_before(sim, cfg)
    e1 = energy_after_realign(sim, cfg)
    top = sim.values[sim.order[: cfg.c]].copy()
    return ScoreBreakdown(e0=e0, e1=e1, delta=e1 - e0, delta_top=top)


def mcm_score(sim: SimilarityRow, cfg: ScoreConfig) -> float:
    """Maximum softmax over temperature-scaled similarities."""
    scaled = sim.values / cfg.tau
    return math.exp(float(scaled[sim.order[0]]) - log_sum_exp(scaled))


def _react_clip(image_row: np.ndarray, percentile: float) -> np.ndarray:
    cutoff = np.quantile(image_row, percentile)
    return np.minimum(image_row, cutoff)


def baseline_scores(
    sim: SimilarityRow,
    image_row: np.ndarray,
    texts: FeatureMatrix,
    cfg: ScoreConfig,
) -> dict[str, float]:
    """Baseline OOD scores for one sample, all oriented larger = more ID.

    MSP is the max softmax at ``msp_tau`` (default 1.0, distinct from MCM's
    sharp temperature); MaxLogit the raw max similarity; Energy the negated
    energy -E0; the ReAct variant clips the image features at a per-sample
    element percentile before recomputing similarities and the energy; the
    ODIN variant is MSP at ``tau`` without input perturbation (embeddings
    carry no pixel gradients).
    """
    image_row = np.asarray(image_row, dtype=np.float64)
    if image_row.shape != (texts.dim,):
        raise DimMismatch(f"image row has shape {image_row.shape}, texts have dim {texts.dim}")
    scaled = sim.values / cfg.tau
    msp_scaled = sim.values / cfg.msp_tau

    clipped = _react_clip(image_row, cfg.react_percentile)
    react_sims = texts.data @ clipped
    react_energy = log_sum_exp(react_sims / cfg.tau)

    return {
        "msp": math.exp(float(msp_scaled[sim.order[0]]) - log_sum_exp(msp_scaled)),
        "maxlogit": sim.top_value,
        "energy": log_sum_exp(scaled),
        "react": react_energy,
        "odin": math.exp(float(scaled[sim.order[0]]) - log_sum_exp(scaled)),
    }


def delta_energy_with_negatives(
    sim_in: SimilarityRow, sim_neg: SimilarityRow, cfg: ScoreConfig
) -> float:
    """Energy-change score contrasted against a negative-label vocabulary.

    Returns the score under the ID labels minus the score under negative
    labels; both rows must come from the same image.
    """
    return delta_energy(sim_in, cfg).delta - delta_energy(sim_neg, cfg).delta


def score_rows(
    method: str,
    images: FeatureMatrix,
    texts: FeatureMatrix,
    cfg: ScoreConfig,
    rows: list[SimilarityRow] | None = None,
) -> np.ndarray:
    """Score every image row with the named method.

    ``rows`` may carry precomputed similarity rows to avoid recomputation.
    """
    from .core import cosine_similarities

    if method not in ALL_METHODS:
        raise InvalidConfig(f"unknown method {method!r}; expected one of {ALL_METHODS}")
    sims = rows if rows is not None else cosine_similarities(images, texts)
    out = np.empty(len(sims), dtype=np.float64)
    for i, sim in enumerate(sims):
        if method == "delta-energy":
            out[i] = delta_energy(sim, cfg).delta
        elif method == "mcm":
            out[i] = mcm_score(sim, cfg)
        else:
            out[i] = baseline_scores(sim, images.row(i), texts, cfg)[method]
    return out
