"""Normalized embedding containers and numerically stable primitives.

All arithmetic is 64-bit. Temperature-scaled exponents reach e^100 at the
default temperature 0.01, so every energy in this package goes through
:func:`log_sum_exp` (max-subtraction); raw ``exp`` sums are never used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimMismatch, EmptyInput, ZeroNormRow

_NORM_TOL = 1e-9
_ZERO_NORM = 1e-12


def _as_matrix(data) -> np.ndarray:
    arr = np.array(data, dtype=np.float64, copy=True)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D array, got ndim={arr.ndim}")
    return arr


@dataclass(frozen=True)
class FeatureMatrix:
    """Row-major matrix of D-dimensional embeddings (images or texts).

    Rows are immutable once constructed. When ``normalized`` is set, every
    row is guaranteed to have unit L2 norm within 1e-9.
    """

    data: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        arr = _as_matrix(self.data)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        if arr.shape[1] <= 0:
            raise ValueError("feature dimension must be positive")
        if not np.isfinite(arr).all():
            raise ValueError("feature matrix contains NaN or Inf")
        if self.normalized and arr.shape[0] > 0:
            norms = np.linalg.norm(arr, axis=1)
            if np.abs(norms - 1.0).max() > _NORM_TOL:
                raise ValueError("normalized flag set but rows are not unit-norm")

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def row(self, i: int) -> np.ndarray:
        return self.data[i]


@dataclass(frozen=True)
class SimilarityRow:
    """One sample's cosine similarities against all K text rows.

    ``order`` is the permutation of class indices sorting ``values`` in
    descending order; ties break toward the lower class index.
    """

    values: np.ndarray
    order: np.ndarray
    source_index: int = 0

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64, copy=True)
        vals.setflags(write=False)
        order = np.array(self.order, dtype=np.int64, copy=True)
        order.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "order", order)
        k = vals.shape[0]
        if vals.ndim != 1 or k == 0:
            raise ValueError("values must be a non-empty 1-D array")
        if not np.isfinite(vals).all():
            raise ValueError("similarities contain NaN or Inf")
        if order.shape != (k,) or not np.array_equal(np.sort(order), np.arange(k)):
            raise ValueError("order is not a permutation of 0..K-1")
        sorted_vals = vals[order]
        if np.any(np.diff(sorted_vals) > 0):
            raise ValueError("order does not sort values in descending order")

    @property
    def num_classes(self) -> int:
        return self.values.shape[0]

    @property
    def top_index(self) -> int:
        return int(self.order[0])

    @property
    def top_value(self) -> float:
        return float(self.values[self.order[0]])


def descending_order(values: np.ndarray) -> np.ndarray:
    """Indices sorting values descending, ties broken by lower index."""
    return np.argsort(-np.asarray(values, dtype=np.float64), kind="stable")


def similarity_row(values, source_index: int = 0) -> SimilarityRow:
    """Build a SimilarityRow from raw values, computing the ordering."""
    vals = np.asarray(values, dtype=np.float64)
    return SimilarityRow(values=vals, order=descending_order(vals), source_index=source_index)


def normalize_rows(m: FeatureMatrix) -> FeatureMatrix:
    """Divide each row by its L2 norm and set the normalized flag.

    A no-op (returning the same object) when the flag is already set, which
    makes repeated normalization bitwise idempotent.

    Raises:
        ZeroNormRow: if any row has norm <= 1e-12.
    """
    if m.normalized:
        return m
    norms = np.linalg.norm(m.data, axis=1)
    bad = np.flatnonzero(norms <= _ZERO_NORM)
    if bad.size:
        raise ZeroNormRow(int(bad[0]))
    return FeatureMatrix(m.data / norms[:, None], normalized=True)


def cosine_similarities(images: FeatureMatrix, texts: FeatureMatrix) -> list[SimilarityRow]:
    """Cosine similarities of every image row against all K text rows.

    Both inputs must be normalized and share the feature dimension. Values
    are clamped to [-1, 1] after the dot products (rounding guard).
    """
    if images.dim != texts.dim:
        raise DimMismatch(f"image dim {images.dim} != text dim {texts.dim}")
    if not (images.normalized and texts.normalized):
        raise ValueError("cosine_similarities requires normalized inputs")
    if texts.rows == 0:
        raise EmptyInput("need at least one text row")
    sims = np.clip(images.data @ texts.data.T, -1.0, 1.0)
    return [
        SimilarityRow(values=row, order=descending_order(row), source_index=i)
        for i, row in enumerate(sims)
    ]


def log_sum_exp(xs: Sequence[float]) -> float:
    """log(sum(exp(xs))) with max-subtraction; exact for singletons."""
    arr = np.asarray(xs, dtype=np.float64)
    if arr.size == 0:
        raise EmptyInput("log_sum_exp of an empty sequence")
    if not np.isfinite(arr).all():
        raise ValueError("log_sum_exp requires finite inputs")
    if arr.size == 1:
        return float(arr[0])
    m = float(arr.max())
    return m + math.log(float(np.exp(arr - m).sum()))


def log_sum_exp_rows(xs: np.ndarray) -> np.ndarray:
    """Row-wise log-sum-exp for a 2-D array (same algorithm, vectorized)."""
    arr = np.asarray(xs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] == 0:
        raise EmptyInput("log_sum_exp_rows expects a non-empty 2-D array")
    m = arr.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(arr - m).sum(axis=1, keepdims=True))).ravel()
