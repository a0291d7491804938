"""Element-wise product masks between image and text features.

Sign masks zero the image elements whose contribution to the top-1 cosine
similarity is positive (or negative); the top-p retention mask keeps the
largest p-proportion of product elements and is the mask used by the
bound-maximization loss. Masked vectors are never re-normalized: downstream
energies dot them with text features as-is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, InvalidConfig

MASK_KINDS = ("positive_zeroed", "negative_zeroed", "top_p_retained")


@dataclass(frozen=True)
class MaskSpec:
    """Mask selector: which elements to zero, and the retention fraction p."""

    kind: str = "top_p_retained"
    p: float = 0.5

    def __post_init__(self):
        if self.kind not in MASK_KINDS:
            raise InvalidConfig(f"unknown mask kind {self.kind!r}")
        if not (0 < self.p <= 1):
            raise InvalidConfig("p must be in (0, 1]")


@dataclass(frozen=True)
class MaskReport:
    """Binary mask plus diagnostics.

    ``mask_distance`` is the L2 norm of the zeroed coordinates, i.e.
    ||original - original * mask||_2.
    """

    mask: np.ndarray
    kept_count: int
    mask_distance: float


def product_vector(image_row: np.ndarray, text_row: np.ndarray) -> np.ndarray:
    """Element-wise product of an image row and a text row."""
    image_row = np.asarray(image_row, dtype=np.float64)
    text_row = np.asarray(text_row, dtype=np.float64)
    if image_row.shape != text_row.shape:
        raise DimMismatch(f"shapes {image_row.shape} and {text_row.shape} differ")
    return image_row * text_row


def _report(image_row: np.ndarray, mask: np.ndarray) -> tuple[MaskReport, np.ndarray]:
    masked = image_row * mask
    distance = float(np.linalg.norm(image_row - masked))
    report = MaskReport(mask=mask, kept_count=int(mask.sum()), mask_distance=distance)
    return report, masked


def sign_mask(
    image_row: np.ndarray, product: np.ndarray, kind: str
) -> tuple[MaskReport, np.ndarray]:
    """Zero image elements by the sign of the corresponding product element.

    ``positive_zeroed`` removes elements where the product is > 0 (the ones
    carrying the alignment), ``negative_zeroed`` removes those < 0. Elements
    with a zero product are always kept.
    """
    image_row = np.asarray(image_row, dtype=np.float64)
    product = np.asarray(product, dtype=np.float64)
    if image_row.shape != product.shape:
        raise DimMismatch(f"shapes {image_row.shape} and {product.shape} differ")
    if kind == "positive_zeroed":
        mask = (product <= 0).astype(np.float64)
    elif kind == "negative_zeroed":
        mask = (product >= 0).astype(np.float64)
    else:
        raise InvalidConfig(f"sign_mask kind must be positive_zeroed or negative_zeroed, got {kind!r}")
    return _report(image_row, mask)


def top_p_mask(
    image_row: np.ndarray, text_row: np.ndarray, p: float
) -> tuple[MaskReport, np.ndarray]:
    """Keep the ceil(p*D) image elements with the largest product values.

    Largest by signed value, not magnitude; ties break toward the lower
    index. The masked vector is not re-normalized.
    """
    if not (0 < p <= 1):
        raise InvalidConfig("p must be in (0, 1]")
    products = product_vector(image_row, text_row)
    k = math.ceil(p * products.shape[0])
    keep = np.argsort(-products, kind="stable")[:k]
    mask = np.zeros(products.shape[0], dtype=np.float64)
    mask[keep] = 1.0
    return _report(np.asarray(image_row, dtype=np.float64), mask)


def apply_mask(
    spec: MaskSpec, image_row: np.ndarray, text_row: np.ndarray
) -> tuple[MaskReport, np.ndarray]:
    """Apply the mask described by ``spec`` against the given text row."""
    if spec.kind == "top_p_retained":
        return top_p_mask(image_row, text_row, spec.p)
    return sign_mask(image_row, product_vector(image_row, text_row), spec.kind)
